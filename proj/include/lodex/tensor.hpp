#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace lodex {

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major tensor of doubles, rank 0 (scalar), 1 (vector) or 2 (matrix).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;

    static Tensor scalar(double v) {
        Tensor t;
        t.data = {v};
        return t;
    }

    static Tensor vec(std::vector<double> v) {
        Tensor t;
        t.shape = {static_cast<int>(v.size())};
        t.data = std::move(v);
        return t;
    }

    static Tensor zeros(std::initializer_list<int> shape) {
        Tensor t;
        t.shape.assign(shape);
        t.data.assign(static_cast<size_t>(t.count()), 0.0);
        return t;
    }

    static Tensor zeros_like(const Tensor& o) {
        Tensor t;
        t.shape = o.shape;
        t.data.assign(o.data.size(), 0.0);
        return t;
    }

    int64_t count() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }

    int rank() const { return static_cast<int>(shape.size()); }
    bool is_scalar() const { return data.size() == 1 && rank() == 0; }
    bool is_vector() const { return rank() == 1; }
    bool is_matrix() const { return rank() == 2; }
    bool empty() const { return data.empty() && shape.empty(); }

    int rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? shape[0] : 1); }
    int cols() const { return rank() == 2 ? shape[1] : 1; }

    double& operator()(int i) { return data[static_cast<size_t>(i)]; }
    double operator()(int i) const { return data[static_cast<size_t>(i)]; }
    double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
    double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

}  // namespace lodex
