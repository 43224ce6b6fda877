#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "lodex/tensor.hpp"

// Reverse-mode autodiff on an append-only tape. Nodes are recorded in
// topological order by construction; backward() walks the tape once in
// reverse. Supports exactly the shapes the networks need: matrix products,
// same-shape elementwise ops, row concat/slice, reductions and a column
// broadcast for biases on batched (column-stacked) inputs.

namespace lodex {

enum class Op : uint8_t {
    Leaf,
    MatMul,
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Add,
    Sub,
    Mul,
    Scale,
    Shift,
    ConcatRows,
    SliceRows,
    Reshape,
    Sum,
    AddColVec,
};

class Graph;

struct Var {
    Graph* g = nullptr;
    int id = -1;
    const Tensor& value() const;
    bool valid() const { return g != nullptr && id >= 0; }
};

namespace detail {

// C(m x n) += A(m x k) * B(k x n), all row-major
inline void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(m x k) += G(m x n) * B(k x n)^T
inline void mm_nt(const double* g, const double* b, double* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const double* grow = g + static_cast<size_t>(i) * n;
        double* crow = c + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double* brow = b + static_cast<size_t>(p) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// C(k x n) += A(m x k)^T * G(m x n)
inline void mm_tn(const double* a, const double* g, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        const double* grow = g + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * grow[j];
        }
    }
}

inline double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus_scalar(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

}  // namespace detail

class Graph {
public:
    struct Node {
        Op op = Op::Leaf;
        bool needs_grad = false;
        int a = -1, b = -1;
        double c = 0.0;   // scale/shift constant
        int i0 = 0;       // slice offset / aux
        Tensor value;
    };

    void reserve(size_t n) { nodes_.reserve(n); }
    size_t size() const { return nodes_.size(); }

    // When enabled, every forward op validates that its output is finite.
    void set_check_finite(bool on) { check_finite_ = on; }

    const Tensor& value(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }

    // Gradient accumulated for a node by the last backward(); empty when absent.
    const Tensor& grad(Var v) const {
        static const Tensor kEmpty;
        if (grads_.size() <= static_cast<size_t>(v.id)) return kEmpty;
        return grads_[static_cast<size_t>(v.id)];
    }

    Var leaf(Tensor t) {
        if (t.count() != static_cast<int64_t>(t.data.size()))
            throw DimensionError("leaf: shape " + t.shape_str() + " does not match data length");
        Node n;
        n.op = Op::Leaf;
        n.needs_grad = t.requires_grad;
        n.value = std::move(t);
        return push(std::move(n));
    }

    Var param(Tensor t) {
        t.requires_grad = true;
        return leaf(std::move(t));
    }

    Var input(Tensor t) {
        t.requires_grad = false;
        return leaf(std::move(t));
    }

    Var matmul(Var a, Var b) {
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        if (ta.rank() != 2 || (tb.rank() != 2 && tb.rank() != 1))
            throw DimensionError("matmul: need matrix x (matrix|vector), got " + ta.shape_str() +
                                 " x " + tb.shape_str());
        if (ta.shape[1] != tb.shape[0])
            throw DimensionError("matmul: inner dimensions disagree, " + ta.shape_str() + " x " +
                                 tb.shape_str());
        const int m = ta.shape[0], k = ta.shape[1];
        const int n = tb.rank() == 2 ? tb.shape[1] : 1;
        Node nd = binary(Op::MatMul, a, b);
        nd.value = tb.rank() == 2 ? Tensor::zeros({m, n}) : Tensor::zeros({m});
        detail::mm_nn(ta.data.data(), tb.data.data(), nd.value.data.data(), m, k, n);
        return push(std::move(nd));
    }

    Var tanh(Var x) { return unary(Op::Tanh, x); }
    Var sigmoid(Var x) { return unary(Op::Sigmoid, x); }
    Var softplus(Var x) { return unary(Op::Softplus, x); }
    Var exp(Var x) { return unary(Op::Exp, x); }
    Var log(Var x) { return unary(Op::Log, x); }

    Var add(Var a, Var b) { return elementwise(Op::Add, a, b); }
    Var sub(Var a, Var b) { return elementwise(Op::Sub, a, b); }
    Var mul(Var a, Var b) { return elementwise(Op::Mul, a, b); }

    Var scale(Var a, double c) {
        Node nd = unary_node(Op::Scale, a);
        nd.c = c;
        for (double& v : nd.value.data) v *= c;
        return push(std::move(nd));
    }

    Var shift(Var a, double c) {
        Node nd = unary_node(Op::Shift, a);
        nd.c = c;
        for (double& v : nd.value.data) v += c;
        return push(std::move(nd));
    }

    // [a; b] for vectors (the stacking operator).
    Var concat_rows(Var a, Var b) {
        if (val(a).rank() != 1 || val(b).rank() != 1)
            throw DimensionError("concat_rows: both arguments must be vectors");
        return vstack(a, b);
    }

    // Row-stack of two vectors or two matrices with equal column counts.
    Var vstack(Var a, Var b) {
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        if (ta.rank() != tb.rank() || ta.rank() < 1 || ta.rank() > 2)
            throw DimensionError("vstack: rank mismatch " + ta.shape_str() + " vs " + tb.shape_str());
        if (ta.rank() == 2 && ta.shape[1] != tb.shape[1])
            throw DimensionError("vstack: column counts differ");
        Node nd = binary(Op::ConcatRows, a, b);
        if (ta.rank() == 1)
            nd.value = Tensor::zeros({ta.shape[0] + tb.shape[0]});
        else
            nd.value = Tensor::zeros({ta.shape[0] + tb.shape[0], ta.shape[1]});
        std::copy(ta.data.begin(), ta.data.end(), nd.value.data.begin());
        std::copy(tb.data.begin(), tb.data.end(), nd.value.data.begin() + ta.data.size());
        return push(std::move(nd));
    }

    Var slice_rows(Var a, int offset, int len) {
        const Tensor& ta = val(a);
        if (ta.rank() < 1 || ta.rank() > 2 || offset < 0 || len < 0 || offset + len > ta.shape[0])
            throw DimensionError("slice_rows: range [" + std::to_string(offset) + ", " +
                                 std::to_string(offset + len) + ") out of " + ta.shape_str());
        Node nd = binary(Op::SliceRows, a, -1);
        nd.i0 = offset;
        const int c = ta.cols();
        nd.value = ta.rank() == 1 ? Tensor::zeros({len}) : Tensor::zeros({len, c});
        std::copy(ta.data.begin() + static_cast<size_t>(offset) * c,
                  ta.data.begin() + static_cast<size_t>(offset + len) * c, nd.value.data.begin());
        return push(std::move(nd));
    }

    Var reshape(Var a, std::vector<int> shape) {
        const Tensor& ta = val(a);
        int64_t n = 1;
        for (int d : shape) n *= d;
        if (n != ta.count()) throw DimensionError("reshape: element count mismatch");
        Node nd = binary(Op::Reshape, a, -1);
        nd.value = ta;
        nd.value.shape = std::move(shape);
        nd.value.requires_grad = false;
        return push(std::move(nd));
    }

    Var sum(Var a) {
        const Tensor& ta = val(a);
        double s = 0.0;
        for (double v : ta.data) s += v;
        Node nd = binary(Op::Sum, a, -1);
        nd.value = Tensor::scalar(s);
        return push(std::move(nd));
    }

    // matrix(m x n) + column vector(m), broadcast across columns
    Var add_colvec(Var m, Var v) {
        const Tensor& tm = val(m);
        const Tensor& tv = val(v);
        if (tm.rank() != 2 || tv.rank() != 1 || tm.shape[0] != tv.shape[0])
            throw DimensionError("add_colvec: need (m x n) + (m), got " + tm.shape_str() + " + " +
                                 tv.shape_str());
        Node nd = binary(Op::AddColVec, m, v);
        nd.value = tm;
        nd.value.requires_grad = false;
        const int rows = tm.shape[0], cols = tm.shape[1];
        for (int i = 0; i < rows; ++i) {
            double* row = nd.value.data.data() + static_cast<size_t>(i) * cols;
            const double add = tv.data[static_cast<size_t>(i)];
            for (int j = 0; j < cols; ++j) row[j] += add;
        }
        return push(std::move(nd));
    }

    // Reverse accumulation from a scalar root. Every requires_grad leaf
    // reachable from the root receives a gradient of its own shape.
    // release_buffers frees interior values/grads as soon as they are
    // consumed, which bounds peak memory in training graphs.
    void backward(Var root, bool release_buffers = false) {
        if (root.g != this) throw ContractError("backward: root from another graph");
        const Tensor& rv = val(root);
        if (rv.data.size() != 1) throw ContractError("backward: root must be a scalar");
        grads_.assign(nodes_.size(), Tensor());
        if (!nodes_[static_cast<size_t>(root.id)].needs_grad) return;
        grads_[static_cast<size_t>(root.id)] = Tensor::scalar(1.0);
        grads_[static_cast<size_t>(root.id)].shape = rv.shape;

        for (int i = root.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            Tensor& g = grads_[static_cast<size_t>(i)];
            if (g.data.empty() || !n.needs_grad) continue;
            apply_backward(n, g);
            if (release_buffers && n.op != Op::Leaf) {
                g = Tensor();
                n.value = Tensor();
            }
        }
    }

private:
    friend struct Var;

    const Tensor& val(Var v) const {
        if (v.g != this) throw ContractError("op: operand from another graph");
        return nodes_[static_cast<size_t>(v.id)].value;
    }

    Var push(Node&& n) {
        if (check_finite_ && !n.value.all_finite())
            throw EvalError("non-finite value produced by forward op");
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    Node binary(Op op, Var a, int b_id) {
        Node n;
        n.op = op;
        n.a = a.id;
        n.b = b_id;
        n.needs_grad = nodes_[static_cast<size_t>(a.id)].needs_grad;
        return n;
    }

    Node binary(Op op, Var a, Var b) {
        if (b.g != this) throw ContractError("op: operand from another graph");
        Node n = binary(op, a, b.id);
        n.needs_grad = n.needs_grad || nodes_[static_cast<size_t>(b.id)].needs_grad;
        return n;
    }

    Node unary_node(Op op, Var a) {
        Node n = binary(op, a, -1);
        n.value = val(a);
        n.value.requires_grad = false;
        return n;
    }

    Var elementwise(Op op, Var a, Var b) {
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        if (!ta.same_shape(tb))
            throw DimensionError("elementwise: shape mismatch " + ta.shape_str() + " vs " +
                                 tb.shape_str());
        Node nd = binary(op, a, b);
        nd.value = ta;
        nd.value.requires_grad = false;
        const double* pb = tb.data.data();
        double* po = nd.value.data.data();
        const size_t count = nd.value.data.size();
        switch (op) {
            case Op::Add:
                for (size_t i = 0; i < count; ++i) po[i] += pb[i];
                break;
            case Op::Sub:
                for (size_t i = 0; i < count; ++i) po[i] -= pb[i];
                break;
            case Op::Mul:
                for (size_t i = 0; i < count; ++i) po[i] *= pb[i];
                break;
            default:
                throw ContractError("elementwise: bad op");
        }
        return push(std::move(nd));
    }

    Var unary(Op op, Var x) {
        Node nd = unary_node(op, x);
        for (double& v : nd.value.data) {
            switch (op) {
                case Op::Tanh: v = std::tanh(v); break;
                case Op::Sigmoid: v = detail::sigmoid_scalar(v); break;
                case Op::Softplus: v = detail::softplus_scalar(v); break;
                case Op::Exp: v = std::exp(v); break;
                case Op::Log: v = std::log(v); break;
                default: throw ContractError("unary: bad op");
            }
        }
        return push(std::move(nd));
    }

    Tensor& ensure_grad(int id) {
        Tensor& g = grads_[static_cast<size_t>(id)];
        if (g.data.empty()) g = Tensor::zeros_like(nodes_[static_cast<size_t>(id)].value);
        return g;
    }

    bool wants_grad(int id) const {
        return id >= 0 && nodes_[static_cast<size_t>(id)].needs_grad;
    }

    void apply_backward(const Node& n, const Tensor& g) {
        const bool ga = wants_grad(n.a);
        const bool gb = wants_grad(n.b);
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::MatMul: {
                const Tensor& A = nodes_[static_cast<size_t>(n.a)].value;
                const Tensor& B = nodes_[static_cast<size_t>(n.b)].value;
                const int m = A.shape[0], k = A.shape[1];
                const int nn = B.rank() == 2 ? B.shape[1] : 1;
                if (ga)
                    detail::mm_nt(g.data.data(), B.data.data(), ensure_grad(n.a).data.data(), m, nn, k);
                if (gb)
                    detail::mm_tn(A.data.data(), g.data.data(), ensure_grad(n.b).data.data(), m, k, nn);
                break;
            }
            case Op::Tanh: {
                if (!ga) break;
                Tensor& da = ensure_grad(n.a);
                const double* y = n.value.data.data();
                const double* pg = g.data.data();
                for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += pg[i] * (1.0 - y[i] * y[i]);
                break;
            }
            case Op::Sigmoid: {
                if (!ga) break;
                Tensor& da = ensure_grad(n.a);
                const double* y = n.value.data.data();
                const double* pg = g.data.data();
                for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += pg[i] * y[i] * (1.0 - y[i]);
                break;
            }
            case Op::Softplus: {
                if (!ga) break;
                Tensor& da = ensure_grad(n.a);
                const double* x = nodes_[static_cast<size_t>(n.a)].value.data.data();
                const double* pg = g.data.data();
                for (size_t i = 0; i < da.data.size(); ++i)
                    da.data[i] += pg[i] * detail::sigmoid_scalar(x[i]);
                break;
            }
            case Op::Exp: {
                if (!ga) break;
                Tensor& da = ensure_grad(n.a);
                const double* y = n.value.data.data();
                const double* pg = g.data.data();
                for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += pg[i] * y[i];
                break;
            }
            case Op::Log: {
                if (!ga) break;
                Tensor& da = ensure_grad(n.a);
                const double* x = nodes_[static_cast<size_t>(n.a)].value.data.data();
                const double* pg = g.data.data();
                for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += pg[i] / x[i];
                break;
            }
            case Op::Add: {
                if (ga) axpy(ensure_grad(n.a), g, 1.0);
                if (gb) axpy(ensure_grad(n.b), g, 1.0);
                break;
            }
            case Op::Sub: {
                if (ga) axpy(ensure_grad(n.a), g, 1.0);
                if (gb) axpy(ensure_grad(n.b), g, -1.0);
                break;
            }
            case Op::Mul: {
                const Tensor& va = nodes_[static_cast<size_t>(n.a)].value;
                const Tensor& vb = nodes_[static_cast<size_t>(n.b)].value;
                const double* pg = g.data.data();
                if (ga) {
                    Tensor& da = ensure_grad(n.a);
                    for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += pg[i] * vb.data[i];
                }
                if (gb) {
                    Tensor& db = ensure_grad(n.b);
                    for (size_t i = 0; i < db.data.size(); ++i) db.data[i] += pg[i] * va.data[i];
                }
                break;
            }
            case Op::Scale: {
                if (ga) axpy(ensure_grad(n.a), g, n.c);
                break;
            }
            case Op::Shift: {
                if (ga) axpy(ensure_grad(n.a), g, 1.0);
                break;
            }
            case Op::ConcatRows: {
                const Tensor& va = nodes_[static_cast<size_t>(n.a)].value;
                const size_t na = va.data.size();
                if (ga) {
                    Tensor& da = ensure_grad(n.a);
                    for (size_t i = 0; i < na; ++i) da.data[i] += g.data[i];
                }
                if (gb) {
                    Tensor& db = ensure_grad(n.b);
                    for (size_t i = 0; i < db.data.size(); ++i) db.data[i] += g.data[na + i];
                }
                break;
            }
            case Op::SliceRows: {
                if (!ga) break;
                Tensor& da = ensure_grad(n.a);
                const size_t start = static_cast<size_t>(n.i0) *
                                     nodes_[static_cast<size_t>(n.a)].value.cols();
                for (size_t i = 0; i < g.data.size(); ++i) da.data[start + i] += g.data[i];
                break;
            }
            case Op::Reshape: {
                if (ga) axpy(ensure_grad(n.a), g, 1.0);
                break;
            }
            case Op::Sum: {
                if (!ga) break;
                Tensor& da = ensure_grad(n.a);
                const double gv = g.data[0];
                for (double& v : da.data) v += gv;
                break;
            }
            case Op::AddColVec: {
                if (ga) axpy(ensure_grad(n.a), g, 1.0);
                if (gb) {
                    Tensor& dv = ensure_grad(n.b);
                    const int rows = n.value.shape[0], cols = n.value.shape[1];
                    for (int i = 0; i < rows; ++i) {
                        const double* row = g.data.data() + static_cast<size_t>(i) * cols;
                        double acc = 0.0;
                        for (int j = 0; j < cols; ++j) acc += row[j];
                        dv.data[static_cast<size_t>(i)] += acc;
                    }
                }
                break;
            }
        }
    }

    static void axpy(Tensor& y, const Tensor& x, double a) {
        for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += a * x.data[i];
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool check_finite_ = false;
};

inline const Tensor& Var::value() const { return g->value(*this); }

inline Var matmul(Var a, Var b) { return a.g->matmul(a, b); }
inline Var tanh(Var x) { return x.g->tanh(x); }
inline Var sigmoid(Var x) { return x.g->sigmoid(x); }
inline Var softplus(Var x) { return x.g->softplus(x); }
inline Var exp(Var x) { return x.g->exp(x); }
inline Var log(Var x) { return x.g->log(x); }
inline Var add(Var a, Var b) { return a.g->add(a, b); }
inline Var sub(Var a, Var b) { return a.g->sub(a, b); }
inline Var mul(Var a, Var b) { return a.g->mul(a, b); }
inline Var scale(Var a, double c) { return a.g->scale(a, c); }
inline Var shift(Var a, double c) { return a.g->shift(a, c); }
inline Var concat_rows(Var a, Var b) { return a.g->concat_rows(a, b); }
inline Var vstack(Var a, Var b) { return a.g->vstack(a, b); }
inline Var slice_rows(Var a, int off, int len) { return a.g->slice_rows(a, off, len); }
inline Var sum(Var a) { return a.g->sum(a); }
inline Var add_colvec(Var m, Var v) { return m.g->add_colvec(m, v); }

// f must build a scalar-valued graph from one leaf. Compares the reverse-mode
// gradient against central differences, coordinate by coordinate, and returns
// the worst relative error max |analytic-numeric| / max(1e-12, |analytic|+|numeric|).
inline double grad_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) throw ContractError("grad_check: eps outside [1e-7, 1e-3]");

    Graph g;
    Var vx = g.param(x);
    Var loss = f(g, vx);
    if (loss.value().data.size() != 1) throw ContractError("grad_check: f must return a scalar");
    if (!loss.value().all_finite()) throw EvalError("grad_check: non-finite f(x)");
    g.backward(loss);
    const Tensor analytic = g.grad(vx);

    auto eval = [&](const Tensor& at) {
        Graph ge;
        Var v = ge.input(at);
        Var out = f(ge, v);
        const double r = out.value().data[0];
        if (!std::isfinite(r)) throw EvalError("grad_check: non-finite f evaluation");
        return r;
    };

    double worst = 0.0;
    Tensor probe = x;
    for (size_t i = 0; i < probe.data.size(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + eps;
        const double fp = eval(probe);
        probe.data[i] = orig - eps;
        const double fm = eval(probe);
        probe.data[i] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic.data[i];
        const double rel = std::fabs(a - numeric) / std::max(1e-12, std::fabs(a) + std::fabs(numeric));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace lodex
