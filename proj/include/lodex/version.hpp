#pragma once

namespace lodex {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace lodex
