#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lodex/channel.hpp"
#include "lodex/graph.hpp"
#include "lodex/odeint.hpp"
#include "lodex/rng.hpp"
#include "lodex/tensor.hpp"

// The extrapolation network: an ODE-RNN encoder (hidden state evolved by
// f_theta1 between observations, updated by a GRU at observations), a
// Gaussian posterior head g_phi1 over the initial latent state, latent
// dynamics f_theta2 integrated across the downlink block times, and a linear
// readout g_phi2 per block.
//
// Every op below is shape-generic: vectors for single samples, column-stacked
// L x B matrices for mini-batches. The arithmetic per column is identical in
// both layouts, so batched and per-sample runs agree bit for bit.

namespace lodex {

enum class Act : uint8_t { linear, tanh_, sigmoid_ };

struct LayerSpec {
    int in = 0, out = 0;
    Act act = Act::linear;
};
using FnnSpec = std::vector<LayerSpec>;

struct NetConfig {
    int L = 48;       // hidden/latent dimension
    int hidden = 40;  // FNN hidden width
    int M = 32;       // observed antennas
    int N = 64;       // full array size
    int Tu = 50;      // uplink blocks
    int Td = 50;      // downlink blocks
    OdeMethod method = OdeMethod::rk4;
    int substeps = 4;             // solver steps per block interval
    bool skip_first_obs = false;  // drop observation 0 (paper index range)

    int in_dim() const { return 2 * M; }
    int out_dim() const { return 2 * N; }
    int total_blocks() const { return Tu + Td; }
    // Block times normalized to [0, 1); keeps solver steps O(1/T).
    double block_time(int n) const { return static_cast<double>(n) / total_blocks(); }

    void validate() const {
        if (L < 1) throw ConfigError("net.L must be >= 1");
        if (hidden < 1) throw ConfigError("net.hidden must be >= 1");
        if (M < 1 || N < 1 || M > N) throw ConfigError("net: need 1 <= M <= N");
        if (Tu < 1 || Td < 1) throw ConfigError("net: Tu and Td must be >= 1");
        if (substeps < 1) throw ConfigError("net.substeps must be >= 1");
        if (skip_first_obs && Tu < 2) throw ConfigError("net.skip_first_obs needs Tu >= 2");
    }

    // State dynamics f_theta1 / f_theta2: four tanh layers then linear back
    // to L (final width corrected from the published table for Eq.-(7)
    // consistency).
    FnnSpec spec_dynamics() const {
        return {{L, hidden, Act::tanh_},
                {hidden, hidden, Act::tanh_},
                {hidden, hidden, Act::tanh_},
                {hidden, hidden, Act::tanh_},
                {hidden, L, Act::linear}};
    }
    // Gates f_u, f_r: sigmoid output of width L.
    FnnSpec spec_gate() const {
        return {{L + in_dim(), hidden, Act::tanh_}, {hidden, L, Act::sigmoid_}};
    }
    // Candidate state f_i: linear output of width L.
    FnnSpec spec_candidate() const {
        return {{L + in_dim(), hidden, Act::tanh_}, {hidden, L, Act::linear}};
    }
    // Posterior head g_phi1: emits [mu; raw sigma].
    FnnSpec spec_posterior() const {
        return {{L, hidden, Act::tanh_}, {hidden, 2 * L, Act::linear}};
    }
    // Readout g_phi2: one linear layer to the stacked channel column.
    FnnSpec spec_readout() const { return {{L, out_dim(), Act::linear}}; }
};

struct FnnParams {
    FnnSpec spec;
    std::vector<Tensor> W;  // per layer, (out x in)
    std::vector<Tensor> b;  // per layer, (out)
};

// Canonical group order everywhere (init, flattening, optimizer state,
// checkpoints): theta1, f_u, f_r, f_i, phi1, theta2, phi2.
struct ModelParams {
    FnnParams theta1, f_u, f_r, f_i, phi1, theta2, phi2;

    template <typename Fn>
    void for_each_group(Fn&& fn) {
        fn("theta1", theta1);
        fn("f_u", f_u);
        fn("f_r", f_r);
        fn("f_i", f_i);
        fn("phi1", phi1);
        fn("theta2", theta2);
        fn("phi2", phi2);
    }
    template <typename Fn>
    void for_each_group(Fn&& fn) const {
        const_cast<ModelParams*>(this)->for_each_group(
            [&](const char* name, FnnParams& f) { fn(name, static_cast<const FnnParams&>(f)); });
    }

    // Flattened tensor list in canonical order: W then b per layer.
    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        for_each_group([&](const char*, FnnParams& f) {
            for (size_t l = 0; l < f.W.size(); ++l) {
                out.push_back(&f.W[l]);
                out.push_back(&f.b[l]);
            }
        });
        return out;
    }

    int64_t count() const {
        int64_t n = 0;
        for_each_group([&](const char*, const FnnParams& f) {
            for (const Tensor& t : f.W) n += t.count();
            for (const Tensor& t : f.b) n += t.count();
        });
        return n;
    }

    bool all_finite() const {
        bool ok = true;
        for_each_group([&](const char*, const FnnParams& f) {
            for (const Tensor& t : f.W) ok = ok && t.all_finite();
            for (const Tensor& t : f.b) ok = ok && t.all_finite();
        });
        return ok;
    }
};

namespace detail {

inline FnnParams init_fnn(const FnnSpec& spec, Rng& rng) {
    FnnParams p;
    p.spec = spec;
    for (const LayerSpec& l : spec) {
        const double a = std::sqrt(6.0 / (l.in + l.out));
        Tensor W = Tensor::zeros({l.out, l.in});
        for (double& w : W.data) w = rng.uniform(-a, a);
        p.W.push_back(std::move(W));
        p.b.push_back(Tensor::zeros({l.out}));
    }
    return p;
}

}  // namespace detail

namespace detail {

inline FnnParams zero_fnn(const FnnSpec& spec) {
    FnnParams p;
    p.spec = spec;
    for (const LayerSpec& l : spec) {
        p.W.push_back(Tensor::zeros({l.out, l.in}));
        p.b.push_back(Tensor::zeros({l.out}));
    }
    return p;
}

}  // namespace detail

// All-zero parameters with the right layout (checkpoint loading, baselines).
inline ModelParams zero_params(const NetConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.theta1 = detail::zero_fnn(cfg.spec_dynamics());
    p.f_u = detail::zero_fnn(cfg.spec_gate());
    p.f_r = detail::zero_fnn(cfg.spec_gate());
    p.f_i = detail::zero_fnn(cfg.spec_candidate());
    p.phi1 = detail::zero_fnn(cfg.spec_posterior());
    p.theta2 = detail::zero_fnn(cfg.spec_dynamics());
    p.phi2 = detail::zero_fnn(cfg.spec_readout());
    return p;
}

// Glorot-uniform weights, zero biases, one substream per seed. Groups are
// drawn in canonical order, so layouts are reproducible per (config, seed).
inline ModelParams init_params(const NetConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng = Rng::substream(seed, {0x1417u});
    ModelParams p;
    p.theta1 = detail::init_fnn(cfg.spec_dynamics(), rng);
    p.f_u = detail::init_fnn(cfg.spec_gate(), rng);
    p.f_r = detail::init_fnn(cfg.spec_gate(), rng);
    p.f_i = detail::init_fnn(cfg.spec_candidate(), rng);
    p.phi1 = detail::init_fnn(cfg.spec_posterior(), rng);
    p.theta2 = detail::init_fnn(cfg.spec_dynamics(), rng);
    p.phi2 = detail::init_fnn(cfg.spec_readout(), rng);
    return p;
}

// Tape handles for one FNN's parameters.
struct FnnVars {
    const FnnSpec* spec = nullptr;
    std::vector<Var> W, b;
};

struct ModelVars {
    FnnVars theta1, f_u, f_r, f_i, phi1, theta2, phi2;

    // Flattened leaves in the canonical order, aligned with ModelParams::tensors().
    std::vector<Var> leaves() const {
        std::vector<Var> out;
        for (const FnnVars* f : {&theta1, &f_u, &f_r, &f_i, &phi1, &theta2, &phi2})
            for (size_t l = 0; l < f->W.size(); ++l) {
                out.push_back(f->W[l]);
                out.push_back(f->b[l]);
            }
        return out;
    }
};

namespace detail {

inline FnnVars bind_fnn(Graph& g, const FnnParams& p, bool requires_grad) {
    FnnVars v;
    v.spec = &p.spec;
    for (size_t l = 0; l < p.W.size(); ++l) {
        Tensor W = p.W[l];
        Tensor b = p.b[l];
        W.requires_grad = requires_grad;
        b.requires_grad = requires_grad;
        v.W.push_back(g.leaf(std::move(W)));
        v.b.push_back(g.leaf(std::move(b)));
    }
    return v;
}

}  // namespace detail

inline ModelVars bind_params(Graph& g, const ModelParams& p, bool requires_grad) {
    ModelVars v;
    v.theta1 = detail::bind_fnn(g, p.theta1, requires_grad);
    v.f_u = detail::bind_fnn(g, p.f_u, requires_grad);
    v.f_r = detail::bind_fnn(g, p.f_r, requires_grad);
    v.f_i = detail::bind_fnn(g, p.f_i, requires_grad);
    v.phi1 = detail::bind_fnn(g, p.phi1, requires_grad);
    v.theta2 = detail::bind_fnn(g, p.theta2, requires_grad);
    v.phi2 = detail::bind_fnn(g, p.phi2, requires_grad);
    return v;
}

namespace detail {

inline Var bias_add(Graph& g, Var h, Var b) {
    return h.value().rank() == 2 ? g.add_colvec(h, b) : g.add(h, b);
}

inline Var concat_any(Graph& g, Var a, Var b) {
    return a.value().rank() == 1 ? g.concat_rows(a, b) : g.vstack(a, b);
}

}  // namespace detail

// Affine chain with the configured activations; layers marked linear pass through.
inline Var fnn_forward(Graph& g, const FnnVars& f, Var x) {
    if (f.spec == nullptr || f.spec->empty()) throw ContractError("fnn_forward: unbound FNN");
    const int in_rows = x.value().shape[0];
    if (in_rows != (*f.spec)[0].in)
        throw DimensionError("fnn_forward: input rows " + std::to_string(in_rows) +
                             " do not match layer input " + std::to_string((*f.spec)[0].in));
    Var h = x;
    for (size_t l = 0; l < f.W.size(); ++l) {
        h = detail::bias_add(g, g.matmul(f.W[l], h), f.b[l]);
        switch ((*f.spec)[l].act) {
            case Act::tanh_: h = g.tanh(h); break;
            case Act::sigmoid_: h = g.sigmoid(h); break;
            case Act::linear: break;
        }
    }
    return h;
}

// One GRU update: u and r gate the evolved state m_bar against the candidate
// built from the reset-gated state and the observation.
inline Var gru_update(Graph& g, const ModelVars& v, Var m_bar, Var obs) {
    Var joint = detail::concat_any(g, m_bar, obs);
    Var u = fnn_forward(g, v.f_u, joint);
    Var r = fnn_forward(g, v.f_r, joint);
    Var m_tilde = fnn_forward(g, v.f_i, detail::concat_any(g, g.mul(m_bar, r), obs));
    Var one_minus_u = g.shift(g.scale(u, -1.0), 1.0);
    return g.add(g.mul(one_minus_u, m_tilde), g.mul(u, m_bar));
}

// ODE-RNN encoder: zero initial state; between consecutive observations the
// state follows f_theta1, at each observation the GRU folds the measurement
// in. No evolution happens before the first processed observation.
inline Var encode(Graph& g, const ModelVars& v, const NetConfig& cfg,
                  const std::vector<Var>& obs_seq) {
    if (static_cast<int>(obs_seq.size()) != cfg.Tu)
        throw ContractError("encode: expected Tu=" + std::to_string(cfg.Tu) +
                            " observations, got " + std::to_string(obs_seq.size()));
    const int first = cfg.skip_first_obs ? 1 : 0;
    const Tensor& t0 = obs_seq[static_cast<size_t>(first)].value();
    Tensor init = t0.rank() == 2 ? Tensor::zeros({cfg.L, t0.shape[1]}) : Tensor::zeros({cfg.L});
    Var m = g.input(std::move(init));
    auto field = [&g, &v](Var y) { return fnn_forward(g, v.theta1, y); };
    for (int n = first; n < cfg.Tu; ++n) {
        if (n > first) {
            const double t_prev = cfg.block_time(n - 1);
            const double t_now = cfg.block_time(n);
            const double h = (t_now - t_prev) / cfg.substeps;
            for (int s = 0; s < cfg.substeps; ++s)
                m = ode_step(cfg.method, field, m, t_prev + s * h, h);
        }
        m = gru_update(g, v, m, obs_seq[static_cast<size_t>(n)]);
    }
    return m;
}

struct PosteriorVars {
    Var mu, sigma;
};

// Split g_phi1's output into mu and a softplus-mapped sigma with a 1e-6 floor.
inline PosteriorVars posterior(Graph& g, const ModelVars& v, Var m_final) {
    const int L = m_final.value().shape[0];
    Var raw = fnn_forward(g, v.phi1, m_final);
    Var mu = g.slice_rows(raw, 0, L);
    Var sigma = g.shift(g.softplus(g.slice_rows(raw, L, L)), 1e-6);
    return {mu, sigma};
}

// Training draws z0 = mu + sigma .* eps; inference takes the mean.
inline Var reparameterize(Graph& g, const PosteriorVars& stats, std::optional<Var> eps) {
    if (!eps) return stats.mu;
    return g.add(stats.mu, g.mul(stats.sigma, *eps));
}

// Integrate f_theta2 across the Td downlink block times; z0 is anchored at
// the first of them, so exactly Td latent states come back.
inline std::vector<Var> extrapolate_latent(Graph& g, const ModelVars& v, const NetConfig& cfg,
                                           Var z0) {
    auto field = [&g, &v](Var y) { return fnn_forward(g, v.theta2, y); };
    const TimeGrid grid = TimeGrid::blocks(cfg.Tu, cfg.Td, cfg.total_blocks(), cfg.substeps);
    return ode_solve(cfg.method, field, z0, grid);
}

// Readout per downlink block: stacked real column of the predicted channel.
inline std::vector<Var> decode_channels(Graph& g, const ModelVars& v,
                                        const std::vector<Var>& z_seq) {
    std::vector<Var> out;
    out.reserve(z_seq.size());
    for (Var z : z_seq) out.push_back(fnn_forward(g, v.phi2, z));
    return out;
}

enum class RunMode : uint8_t { train, infer };

// Full pipeline for one sample: observations in, complex N x Td prediction out.
// Infer mode is deterministic; train mode consumes rng for the latent draw.
inline CMat forward(const ChannelSample& sample, const ModelParams& params, const NetConfig& cfg,
                    RunMode mode, Rng* rng = nullptr) {
    cfg.validate();
    if (sample.H_obs.rows != cfg.M || sample.H_obs.cols < cfg.Tu)
        throw ContractError("forward: observation is " + std::to_string(sample.H_obs.rows) + "x" +
                            std::to_string(sample.H_obs.cols) + ", config wants " +
                            std::to_string(cfg.M) + "x" + std::to_string(cfg.Tu));
    if (mode == RunMode::train && rng == nullptr)
        throw ContractError("forward: train mode needs an rng");

    Graph g;
    ModelVars v = bind_params(g, params, false);
    std::vector<Var> obs_seq;
    obs_seq.reserve(static_cast<size_t>(cfg.Tu));
    for (int n = 0; n < cfg.Tu; ++n) {
        Tensor col = Tensor::zeros({cfg.in_dim()});
        col.data = stack_column(sample.H_obs, n);
        obs_seq.push_back(g.input(std::move(col)));
    }

    Var m = encode(g, v, cfg, obs_seq);
    PosteriorVars stats = posterior(g, v, m);
    std::optional<Var> eps;
    if (mode == RunMode::train) {
        Tensor e = Tensor::zeros({cfg.L});
        for (double& x : e.data) x = rng->normal();
        eps = g.input(std::move(e));
    }
    Var z0 = reparameterize(g, stats, eps);
    std::vector<Var> z_seq = extrapolate_latent(g, v, cfg, z0);
    std::vector<Var> cols = decode_channels(g, v, z_seq);

    CMat pred(cfg.N, cfg.Td);
    for (int n = 0; n < cfg.Td; ++n) unstack_column(cols[static_cast<size_t>(n)].value().data, pred, n);
    return pred;
}

}  // namespace lodex
