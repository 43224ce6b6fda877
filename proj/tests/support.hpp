#pragma once

// Scalar reference implementations and graph-assembly helpers shared by the
// unit and acceptance suites. Everything here recomputes results with plain
// loops and std math, independent of the tape.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "lodex/channel.hpp"
#include "lodex/net.hpp"
#include "lodex/rng.hpp"

namespace testsup {

inline double ref_sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
inline double ref_softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

inline std::vector<double> ref_fnn(const lodex::FnnParams& p, std::vector<double> x) {
    for (size_t l = 0; l < p.spec.size(); ++l) {
        const lodex::LayerSpec& ls = p.spec[l];
        std::vector<double> y(static_cast<size_t>(ls.out));
        for (int o = 0; o < ls.out; ++o) {
            double acc = 0.0;
            for (int i = 0; i < ls.in; ++i)
                acc += p.W[l](o, i) * x[static_cast<size_t>(i)];
            acc += p.b[l](o);
            switch (ls.act) {
                case lodex::Act::tanh_: acc = std::tanh(acc); break;
                case lodex::Act::sigmoid_: acc = ref_sigmoid(acc); break;
                case lodex::Act::linear: break;
            }
            y[static_cast<size_t>(o)] = acc;
        }
        x = std::move(y);
    }
    return x;
}

inline std::vector<double> ref_gru(const lodex::ModelParams& p, const std::vector<double>& m_bar,
                                   const std::vector<double>& obs) {
    std::vector<double> joint = m_bar;
    joint.insert(joint.end(), obs.begin(), obs.end());
    const std::vector<double> u = ref_fnn(p.f_u, joint);
    const std::vector<double> r = ref_fnn(p.f_r, joint);
    std::vector<double> gated(m_bar.size());
    for (size_t i = 0; i < m_bar.size(); ++i) gated[i] = m_bar[i] * r[i];
    gated.insert(gated.end(), obs.begin(), obs.end());
    const std::vector<double> cand = ref_fnn(p.f_i, gated);
    std::vector<double> out(m_bar.size());
    for (size_t i = 0; i < m_bar.size(); ++i)
        out[i] = (1.0 - u[i]) * cand[i] + u[i] * m_bar[i];
    return out;
}

// Plain GRU chain from a zero state; matches the encoder when the inter-block
// dynamics are identically zero.
inline std::vector<double> ref_gru_chain(const lodex::ModelParams& p, const lodex::CMat& h_obs,
                                         int L, int Tu, bool skip_first) {
    std::vector<double> m(static_cast<size_t>(L), 0.0);
    for (int n = skip_first ? 1 : 0; n < Tu; ++n)
        m = ref_gru(p, m, lodex::stack_column(h_obs, n));
    return m;
}

struct RefPosterior {
    std::vector<double> mu, sigma;
};

inline RefPosterior ref_posterior(const lodex::ModelParams& p, const std::vector<double>& m) {
    const std::vector<double> raw = ref_fnn(p.phi1, m);
    const size_t L = raw.size() / 2;
    RefPosterior out;
    out.mu.assign(raw.begin(), raw.begin() + static_cast<long>(L));
    out.sigma.resize(L);
    for (size_t i = 0; i < L; ++i) out.sigma[i] = ref_softplus(raw[L + i]) + 1e-6;
    return out;
}

inline lodex::NetConfig tiny_cfg(int hidden = 8) {
    lodex::NetConfig cfg;
    cfg.N = 4;
    cfg.M = 2;
    cfg.Tu = 4;
    cfg.Td = 3;
    cfg.L = 6;
    cfg.hidden = hidden;
    cfg.substeps = 2;
    return cfg;
}

// One deterministic synthetic sample at the dimensions the config expects.
inline lodex::ChannelSample make_sample(const lodex::NetConfig& cfg, uint64_t seed) {
    lodex::ChannelScenario sc;
    sc.N = cfg.N;
    sc.Tu = cfg.Tu;
    sc.Td = cfg.Td;
    sc.Np = 3;
    lodex::Rng rng(seed);
    lodex::PathDistribution dist;
    lodex::ChannelSample s;
    s.H = lodex::gen_channel(lodex::sample_paths(rng, sc, dist), sc);
    s.antenna_set = lodex::select_antennas(cfg.N, cfg.M, lodex::AntennaScheme::uniform);
    s.H_obs = lodex::observe_uplink(s.H, s.antenna_set, std::nullopt, cfg.Tu, rng);
    return s;
}

inline int fnn_param_count(const lodex::FnnSpec& spec) {
    int n = 0;
    for (const lodex::LayerSpec& l : spec) n += l.out * l.in + l.out;
    return n;
}

inline lodex::Tensor flatten_fnn(const lodex::FnnParams& p) {
    lodex::Tensor t;
    t.shape = {fnn_param_count(p.spec)};
    t.data.reserve(static_cast<size_t>(t.shape[0]));
    for (size_t l = 0; l < p.W.size(); ++l) {
        t.data.insert(t.data.end(), p.W[l].data.begin(), p.W[l].data.end());
        t.data.insert(t.data.end(), p.b[l].data.begin(), p.b[l].data.end());
    }
    return t;
}

// Rebuild an FNN's tape handles from one flat parameter vector, so a whole
// group can be the subject of a single gradient check.
inline lodex::FnnVars bind_fnn_from_vec(lodex::Graph& g, const lodex::FnnSpec& spec, lodex::Var x) {
    lodex::FnnVars v;
    v.spec = &spec;
    int off = 0;
    for (const lodex::LayerSpec& l : spec) {
        v.W.push_back(g.reshape(g.slice_rows(x, off, l.out * l.in), {l.out, l.in}));
        off += l.out * l.in;
        v.b.push_back(g.slice_rows(x, off, l.out));
        off += l.out;
    }
    return v;
}

// Full single-sample training loss (mean squared error over the stacked
// downlink columns, fixed latent draw) with one chosen parameter group bound
// to the flat vector x and the rest held constant.
inline std::function<lodex::Var(lodex::Graph&, lodex::Var)> group_loss_builder(
    const lodex::ChannelSample& sample, const lodex::ModelParams& params, const lodex::NetConfig& cfg,
    int group_index, const lodex::Tensor& eps) {
    return [&sample, &params, cfg, group_index, eps](lodex::Graph& g, lodex::Var x) {
        lodex::ModelVars v = lodex::bind_params(g, params, false);
        lodex::FnnVars* slots[7] = {&v.theta1, &v.f_u, &v.f_r, &v.f_i, &v.phi1, &v.theta2, &v.phi2};
        const lodex::FnnSpec* specs[7] = {&params.theta1.spec, &params.f_u.spec, &params.f_r.spec,
                                          &params.f_i.spec,   &params.phi1.spec, &params.theta2.spec,
                                          &params.phi2.spec};
        *slots[group_index] = bind_fnn_from_vec(g, *specs[group_index], x);

        std::vector<lodex::Var> obs_seq;
        for (int n = 0; n < cfg.Tu; ++n) {
            lodex::Tensor col = lodex::Tensor::zeros({cfg.in_dim()});
            col.data = lodex::stack_column(sample.H_obs, n);
            obs_seq.push_back(g.input(std::move(col)));
        }
        lodex::Var m = lodex::encode(g, v, cfg, obs_seq);
        lodex::PosteriorVars stats = lodex::posterior(g, v, m);
        lodex::Var z0 = lodex::reparameterize(g, stats, g.input(eps));
        std::vector<lodex::Var> z_seq = lodex::extrapolate_latent(g, v, cfg, z0);
        std::vector<lodex::Var> cols = lodex::decode_channels(g, v, z_seq);

        lodex::Var acc{};
        for (int n = 0; n < cfg.Td; ++n) {
            lodex::Tensor label = lodex::Tensor::zeros({cfg.out_dim()});
            label.data = lodex::stack_column(sample.H, cfg.Tu + n);
            lodex::Var d = g.sub(cols[static_cast<size_t>(n)], g.input(std::move(label)));
            lodex::Var sq = g.sum(g.mul(d, d));
            acc = n == 0 ? sq : g.add(acc, sq);
        }
        return g.scale(acc, 1.0 / (static_cast<double>(cfg.N) * cfg.Td));
    };
}

inline const char* group_name(int i) {
    static const char* names[7] = {"theta1", "f_u", "f_r", "f_i", "phi1", "theta2", "phi2"};
    return names[i];
}

inline lodex::FnnParams* group_of(lodex::ModelParams& p, int i) {
    lodex::FnnParams* slots[7] = {&p.theta1, &p.f_u, &p.f_r, &p.f_i, &p.phi1, &p.theta2, &p.phi2};
    return slots[i];
}

}  // namespace testsup
