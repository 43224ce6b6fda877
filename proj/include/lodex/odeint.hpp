#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "lodex/graph.hpp"

// Fixed-step explicit integration of autonomous vector fields. Steps are
// built from tape ops, so gradients flow through the unrolled solver
// (discretize-then-optimize).

namespace lodex {

struct IntegrationError : std::runtime_error {
    double t;
    IntegrationError(const std::string& msg, double at)
        : std::runtime_error(msg + " at t=" + std::to_string(at)), t(at) {}
};

enum class OdeMethod { euler, rk4 };

inline OdeMethod ode_method_from_string(const std::string& s) {
    if (s == "euler") return OdeMethod::euler;
    if (s == "rk4") return OdeMethod::rk4;
    throw ConfigError("unknown ODE method '" + s + "' (expected euler|rk4)");
}

inline const char* to_string(OdeMethod m) { return m == OdeMethod::euler ? "euler" : "rk4"; }

struct TimeGrid {
    std::vector<double> points;  // strictly increasing
    int substeps = 1;

    TimeGrid() = default;
    TimeGrid(std::vector<double> pts, int sub) : points(std::move(pts)), substeps(sub) {
        if (substeps < 1) throw ConfigError("TimeGrid: substeps must be >= 1");
        for (size_t i = 1; i < points.size(); ++i)
            if (!(points[i] > points[i - 1]))
                throw ConfigError("TimeGrid: points must be strictly increasing");
    }

    // n equally spaced block times k/(total) for k = first..first+n-1
    static TimeGrid blocks(int first, int n, int total, int substeps) {
        std::vector<double> pts(static_cast<size_t>(n));
        for (int k = 0; k < n; ++k)
            pts[static_cast<size_t>(k)] = static_cast<double>(first + k) / static_cast<double>(total);
        return TimeGrid(std::move(pts), substeps);
    }
};

// One explicit step of size h from state y. Fields are autonomous; t is
// carried only for error reporting.
template <typename Field>
Var ode_step(OdeMethod method, Field&& f, Var y, double t, double h) {
    if (!(h > 0.0)) throw ContractError("ode_step: step size must be positive");
    Graph& g = *y.g;
    Var out{};
    if (method == OdeMethod::euler) {
        out = g.add(y, g.scale(f(y), h));
    } else {
        Var k1 = f(y);
        Var k2 = f(g.add(y, g.scale(k1, h / 2.0)));
        Var k3 = f(g.add(y, g.scale(k2, h / 2.0)));
        Var k4 = f(g.add(y, g.scale(k3, h)));
        Var acc = g.add(k1, k4);
        acc = g.add(acc, g.scale(g.add(k2, k3), 2.0));
        out = g.add(y, g.scale(acc, h / 6.0));
    }
    if (!out.value().all_finite()) throw IntegrationError("ode_step: non-finite state", t + h);
    return out;
}

// States at every grid point, the first being y0 itself. Each interval is
// subdivided into grid.substeps equal steps.
template <typename Field>
std::vector<Var> ode_solve(OdeMethod method, Field&& f, Var y0, const TimeGrid& grid) {
    if (grid.points.empty()) throw ContractError("ode_solve: empty time grid");
    if (!y0.value().all_finite()) throw IntegrationError("ode_solve: non-finite initial state", grid.points[0]);
    std::vector<Var> out;
    out.reserve(grid.points.size());
    out.push_back(y0);
    Var y = y0;
    for (size_t i = 1; i < grid.points.size(); ++i) {
        const double t0 = grid.points[i - 1];
        const double h = (grid.points[i] - t0) / grid.substeps;
        for (int s = 0; s < grid.substeps; ++s) y = ode_step(method, f, y, t0 + s * h, h);
        out.push_back(y);
    }
    return out;
}

}  // namespace lodex
