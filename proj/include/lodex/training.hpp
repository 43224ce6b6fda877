#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "lodex/channel.hpp"
#include "lodex/net.hpp"
#include "lodex/threadpool.hpp"

// Loss, NMSE metric, AdaMax, the learning-rate schedule and the mini-batch
// epoch loop. Training graphs are built per batch with column-stacked inputs;
// per-column arithmetic matches the single-sample path exactly, so metrics
// are reproducible bit for bit for a fixed seed regardless of batch layout
// or validation thread count.

namespace lodex {

struct TrainConfig {
    int batch_size = 80;
    int epochs = 1000;
    double lr0 = 0.004;
    int halve_every = 50;
    double beta1 = 0.9;
    double beta2 = 0.999;
    uint64_t seed = 1;
    std::optional<double> snr_db;  // records the observation SNR the data was built with
    double kl_weight = 0.0;        // ablation only; the published loss is pure MSE

    void validate() const {
        if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
        if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
        if (!(lr0 > 0)) throw ConfigError("train.lr0 must be positive");
        if (halve_every < 1) throw ConfigError("train.halve_every must be >= 1");
        if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("train.beta1 must be in [0, 1)");
        if (!(beta2 > 0 && beta2 < 1)) throw ConfigError("train.beta2 must be in (0, 1)");
        if (!(kl_weight >= 0) || !std::isfinite(kl_weight))
            throw ConfigError("train.kl_weight must be finite and >= 0");
    }
};

struct AdaMaxState {
    std::vector<Tensor> m;  // first moment per parameter tensor
    std::vector<Tensor> u;  // infinity-norm accumulator per parameter tensor
    int64_t t = 0;

    static AdaMaxState like(ModelParams& params) {
        AdaMaxState st;
        for (Tensor* p : params.tensors()) {
            st.m.push_back(Tensor::zeros_like(*p));
            st.u.push_back(Tensor::zeros_like(*p));
        }
        return st;
    }
};

struct RunMetrics {
    std::vector<double> train_loss;
    std::vector<double> val_nmse;     // linear
    std::vector<double> val_nmse_db;
    std::vector<double> lr;
    std::vector<double> wall_ms;

    size_t epochs_completed() const { return train_loss.size(); }
};

inline double to_db(double linear) { return 10.0 * std::log10(linear); }

// Mean squared complex Frobenius error, normalized by batch * N * Td.
inline double mse_loss(const std::vector<CMat>& pred, const std::vector<CMat>& label) {
    if (pred.size() != label.size() || pred.empty())
        throw ContractError("mse_loss: batch sizes differ or empty");
    double acc = 0.0;
    for (size_t s = 0; s < pred.size(); ++s) {
        const CMat& p = pred[s];
        const CMat& l = label[s];
        if (p.rows != l.rows || p.cols != l.cols)
            throw ContractError("mse_loss: sample " + std::to_string(s) + " shape mismatch");
        for (size_t i = 0; i < p.a.size(); ++i) acc += std::norm(l.a[i] - p.a[i]);
    }
    const CMat& first = pred.front();
    return acc / (static_cast<double>(pred.size()) * first.rows * first.cols);
}

struct Nmse {
    double linear = 0.0;
    double db = 0.0;
    size_t excluded = 0;  // zero-norm label samples skipped
};

// Mean over samples of per-sample ||H - Hhat||_F^2 / ||H||_F^2.
inline Nmse nmse(const std::vector<CMat>& pred, const std::vector<CMat>& label) {
    if (pred.size() != label.size() || pred.empty())
        throw ContractError("nmse: batch sizes differ or empty");
    Nmse out;
    double acc = 0.0;
    size_t used = 0;
    for (size_t s = 0; s < pred.size(); ++s) {
        const CMat& p = pred[s];
        const CMat& l = label[s];
        if (p.rows != l.rows || p.cols != l.cols)
            throw ContractError("nmse: sample " + std::to_string(s) + " shape mismatch");
        double err = 0.0, ref = 0.0;
        for (size_t i = 0; i < p.a.size(); ++i) {
            err += std::norm(l.a[i] - p.a[i]);
            ref += std::norm(l.a[i]);
        }
        if (ref == 0.0) {
            ++out.excluded;
            continue;
        }
        acc += err / ref;
        ++used;
    }
    if (used == 0) throw ContractError("nmse: every label sample has zero norm");
    out.linear = acc / static_cast<double>(used);
    out.db = to_db(out.linear);
    return out;
}

// One AdaMax step over aligned tensor lists. The bias-corrected step size is
// lr / (1 - beta1^t); at t = 1 the update is exactly -lr * sign(g).
inline void adamax_step(AdaMaxState& st, const std::vector<Tensor*>& params,
                        const std::vector<Tensor>& grads, double lr, double beta1 = 0.9,
                        double beta2 = 0.999) {
    if (params.size() != grads.size() || params.size() != st.m.size())
        throw ContractError("adamax_step: parameter/gradient/state counts differ");
    if (!(lr > 0)) throw ContractError("adamax_step: lr must be positive");
    st.t += 1;
    const double step = lr / (1.0 - std::pow(beta1, static_cast<double>(st.t)));
    for (size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        if (!g.same_shape(p))
            throw ContractError("adamax_step: gradient " + std::to_string(k) + " shape mismatch");
        Tensor& m = st.m[k];
        Tensor& u = st.u[k];
        for (size_t i = 0; i < p.data.size(); ++i) {
            const double gi = g.data[i];
            m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * gi;
            u.data[i] = std::max(beta2 * u.data[i], std::fabs(gi));
            p.data[i] -= step * m.data[i] / (u.data[i] + 1e-12);
        }
    }
}

inline double lr_at_epoch(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw ContractError("lr_at_epoch: epoch must be >= 0");
    return cfg.lr0 * std::pow(0.5, epoch / cfg.halve_every);
}

namespace detail {

// Column-stacked observation leaf: rows [Re; Im] of uplink block n across the
// selected samples.
inline Var batch_obs_leaf(Graph& g, const Dataset& ds, const std::vector<size_t>& idx, int n) {
    const int M = static_cast<int>(ds.antenna_set.size());
    const int B = static_cast<int>(idx.size());
    Tensor t = Tensor::zeros({2 * M, B});
    for (int j = 0; j < B; ++j) {
        const CMat& obs = ds.samples[idx[static_cast<size_t>(j)]].H_obs;
        for (int i = 0; i < M; ++i) {
            t.data[static_cast<size_t>(i) * B + j] = obs.at(i, n).real();
            t.data[static_cast<size_t>(i + M) * B + j] = obs.at(i, n).imag();
        }
    }
    return g.input(std::move(t));
}

// Column-stacked label leaf: downlink block Tu + n of the true channel.
inline Var batch_label_leaf(Graph& g, const Dataset& ds, const std::vector<size_t>& idx, int n) {
    const int N = ds.scenario.N;
    const int B = static_cast<int>(idx.size());
    const int col = ds.scenario.Tu + n;
    Tensor t = Tensor::zeros({2 * N, B});
    for (int j = 0; j < B; ++j) {
        const CMat& H = ds.samples[idx[static_cast<size_t>(j)]].H;
        for (int i = 0; i < N; ++i) {
            t.data[static_cast<size_t>(i) * B + j] = H.at(i, col).real();
            t.data[static_cast<size_t>(i + N) * B + j] = H.at(i, col).imag();
        }
    }
    return g.input(std::move(t));
}

struct BatchOutputs {
    std::vector<Var> pred_cols;  // Td leaves, each (2N x B)
    PosteriorVars post;
};

// Shared forward over a column-stacked batch.
inline BatchOutputs batch_forward(Graph& g, const ModelVars& v, const Dataset& ds,
                                  const std::vector<size_t>& idx, const NetConfig& cfg,
                                  RunMode mode, Rng* rng) {
    std::vector<Var> obs_seq;
    obs_seq.reserve(static_cast<size_t>(cfg.Tu));
    for (int n = 0; n < cfg.Tu; ++n) obs_seq.push_back(batch_obs_leaf(g, ds, idx, n));
    Var m = encode(g, v, cfg, obs_seq);
    PosteriorVars stats = posterior(g, v, m);
    std::optional<Var> eps;
    if (mode == RunMode::train) {
        Tensor e = Tensor::zeros({cfg.L, static_cast<int>(idx.size())});
        for (double& x : e.data) x = rng->normal();
        eps = g.input(std::move(e));
    }
    Var z0 = reparameterize(g, stats, eps);
    std::vector<Var> z_seq = extrapolate_latent(g, v, cfg, z0);
    return {decode_channels(g, v, z_seq), stats};
}

// Scalar training loss for one batch: the mean squared error of Eq.-(15)
// form, plus the optional KL(q || N(0, I)) ablation term.
inline Var batch_loss(Graph& g, const ModelVars& v, const Dataset& ds,
                      const std::vector<size_t>& idx, const NetConfig& cfg, Rng& rng,
                      double kl_weight) {
    BatchOutputs out = batch_forward(g, v, ds, idx, cfg, RunMode::train, &rng);
    Var total{};
    for (int n = 0; n < cfg.Td; ++n) {
        Var d = g.sub(out.pred_cols[static_cast<size_t>(n)], batch_label_leaf(g, ds, idx, n));
        Var sq = g.sum(g.mul(d, d));
        total = n == 0 ? sq : g.add(total, sq);
    }
    const double B = static_cast<double>(idx.size());
    Var loss = g.scale(total, 1.0 / (B * cfg.N * cfg.Td));
    if (kl_weight != 0.0) {
        Var mu2 = g.sum(g.mul(out.post.mu, out.post.mu));
        Var s2 = g.sum(g.mul(out.post.sigma, out.post.sigma));
        Var logs = g.sum(g.log(out.post.sigma));
        Var kl = g.shift(g.sub(g.add(mu2, s2), g.scale(logs, 2.0)),
                         -static_cast<double>(cfg.L) * B);
        loss = g.add(loss, g.scale(kl, 0.5 * kl_weight / B));
    }
    return loss;
}

}  // namespace detail

enum class Split : uint8_t { train, val, all };

inline std::vector<size_t> split_indices(const Dataset& ds, Split split) {
    size_t begin = 0, end = ds.samples.size();
    if (split == Split::train) end = ds.train_count;
    if (split == Split::val) begin = ds.train_count;
    std::vector<size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    return idx;
}

struct EvalReport {
    double nmse_linear = 0.0;
    double nmse_db = 0.0;
    std::vector<double> per_block_linear;  // length Td
    std::vector<double> per_block_db;
    size_t excluded = 0;
};

// Infer-mode predictions for arbitrary sample indices, computed in
// column-stacked chunks. Chunking and threading change nothing downstream:
// every sample's prediction is written to its own slot.
inline std::vector<CMat> predict(const ModelParams& params, const Dataset& ds,
                                 const NetConfig& cfg, const std::vector<size_t>& idx,
                                 int chunk = 64) {
    if (chunk < 1) throw ContractError("predict: chunk must be >= 1");
    std::vector<CMat> preds(idx.size());
    const size_t nchunks = (idx.size() + static_cast<size_t>(chunk) - 1) / chunk;
    parallel_for(nchunks, [&](size_t c) {
        const size_t lo = c * static_cast<size_t>(chunk);
        const size_t hi = std::min(idx.size(), lo + static_cast<size_t>(chunk));
        const std::vector<size_t> part(idx.begin() + static_cast<long>(lo),
                                       idx.begin() + static_cast<long>(hi));
        Graph g;
        ModelVars v = bind_params(g, params, false);
        detail::BatchOutputs out = detail::batch_forward(g, v, ds, part, cfg, RunMode::infer, nullptr);
        for (size_t j = 0; j < part.size(); ++j) {
            CMat p(cfg.N, cfg.Td);
            for (int n = 0; n < cfg.Td; ++n) {
                const Tensor& col = out.pred_cols[static_cast<size_t>(n)].value();
                const int B = col.shape[1];
                for (int i = 0; i < cfg.N; ++i)
                    p.at(i, n) = cplx(col.data[static_cast<size_t>(i) * B + static_cast<long>(j)],
                                      col.data[static_cast<size_t>(i + cfg.N) * B + static_cast<long>(j)]);
            }
            preds[lo + j] = std::move(p);
        }
    });
    return preds;
}

inline CMat downlink_label(const ChannelSample& s, int Tu, int Td) {
    CMat l(s.H.rows, Td);
    for (int i = 0; i < s.H.rows; ++i)
        for (int n = 0; n < Td; ++n) l.at(i, n) = s.H.at(i, Tu + n);
    return l;
}

// Overall and per-downlink-block NMSE of a split, infer mode.
inline EvalReport evaluate(const ModelParams& params, const Dataset& ds, const NetConfig& cfg,
                           Split split) {
    const std::vector<size_t> idx = split_indices(ds, split);
    if (idx.empty()) throw ContractError("evaluate: empty split");
    const std::vector<CMat> preds = predict(params, ds, cfg, idx);

    EvalReport rep;
    double acc = 0.0;
    size_t used = 0;
    std::vector<double> block_acc(static_cast<size_t>(cfg.Td), 0.0);
    std::vector<size_t> block_used(static_cast<size_t>(cfg.Td), 0);
    for (size_t j = 0; j < idx.size(); ++j) {
        const CMat label = downlink_label(ds.samples[idx[j]], cfg.Tu, cfg.Td);
        const CMat& p = preds[j];
        double err = 0.0, ref = 0.0;
        for (int n = 0; n < cfg.Td; ++n) {
            double berr = 0.0, bref = 0.0;
            for (int i = 0; i < cfg.N; ++i) {
                berr += std::norm(label.at(i, n) - p.at(i, n));
                bref += std::norm(label.at(i, n));
            }
            err += berr;
            ref += bref;
            if (bref > 0.0) {
                block_acc[static_cast<size_t>(n)] += berr / bref;
                block_used[static_cast<size_t>(n)] += 1;
            }
        }
        if (ref == 0.0) {
            ++rep.excluded;
            continue;
        }
        acc += err / ref;
        ++used;
    }
    if (used == 0) throw ContractError("evaluate: every label sample has zero norm");
    rep.nmse_linear = acc / static_cast<double>(used);
    rep.nmse_db = to_db(rep.nmse_linear);
    rep.per_block_linear.resize(static_cast<size_t>(cfg.Td));
    rep.per_block_db.resize(static_cast<size_t>(cfg.Td));
    for (int n = 0; n < cfg.Td; ++n) {
        const size_t bu = block_used[static_cast<size_t>(n)];
        const double lin = bu == 0 ? std::numeric_limits<double>::quiet_NaN()
                                   : block_acc[static_cast<size_t>(n)] / static_cast<double>(bu);
        rep.per_block_linear[static_cast<size_t>(n)] = lin;
        rep.per_block_db[static_cast<size_t>(n)] = to_db(lin);
    }
    return rep;
}

// NMSE over only the first `blocks` downlink blocks, given predictions for
// the samples named by idx (backs the extrapolation-length sweep).
inline Nmse prefix_nmse(const std::vector<CMat>& preds, const Dataset& ds,
                        const std::vector<size_t>& idx, int blocks) {
    if (preds.size() != idx.size() || preds.empty())
        throw ContractError("prefix_nmse: prediction/index counts differ or empty");
    const int Tu = ds.scenario.Tu;
    if (blocks < 1 || blocks > ds.scenario.Td)
        throw ContractError("prefix_nmse: blocks out of [1, Td]");
    Nmse out;
    double acc = 0.0;
    size_t used = 0;
    for (size_t j = 0; j < idx.size(); ++j) {
        const CMat& H = ds.samples[idx[j]].H;
        const CMat& p = preds[j];
        double err = 0.0, ref = 0.0;
        for (int n = 0; n < blocks; ++n)
            for (int i = 0; i < H.rows; ++i) {
                err += std::norm(H.at(i, Tu + n) - p.at(i, n));
                ref += std::norm(H.at(i, Tu + n));
            }
        if (ref == 0.0) {
            ++out.excluded;
            continue;
        }
        acc += err / ref;
        ++used;
    }
    if (used == 0) throw ContractError("prefix_nmse: every label sample has zero norm");
    out.linear = acc / static_cast<double>(used);
    out.db = to_db(out.linear);
    return out;
}

struct TrainResult {
    ModelParams params;
    RunMetrics metrics;
};

inline void check_dataset_matches(const Dataset& ds, const NetConfig& cfg) {
    if (ds.scenario.N != cfg.N || static_cast<int>(ds.antenna_set.size()) != cfg.M ||
        ds.scenario.Tu != cfg.Tu || ds.scenario.Td != cfg.Td)
        throw ConfigError("dataset dimensions (N=" + std::to_string(ds.scenario.N) +
                          ", M=" + std::to_string(ds.antenna_set.size()) +
                          ", Tu=" + std::to_string(ds.scenario.Tu) +
                          ", Td=" + std::to_string(ds.scenario.Td) +
                          ") do not match the network configuration");
}

// Mini-batch AdaMax over the training split with per-epoch infer-mode
// validation. Fully deterministic for a fixed seed: shuffles and latent
// draws come from substreams keyed by (seed, epoch, batch).
inline TrainResult train(const Dataset& ds, const NetConfig& cfg, const TrainConfig& tc,
                         const std::function<void(int, const RunMetrics&)>& progress = {}) {
    cfg.validate();
    tc.validate();
    check_dataset_matches(ds, cfg);
    if (ds.train_count == 0) throw ConfigError("train: dataset has no training split");
    if (ds.train_count < static_cast<size_t>(tc.batch_size))
        throw ConfigError("train: batch_size exceeds the training split");

    TrainResult out;
    out.params = init_params(cfg, tc.seed);
    AdaMaxState state = AdaMaxState::like(out.params);
    const std::vector<Tensor*> ptensors = out.params.tensors();

    std::vector<size_t> order(ds.train_count);
    std::iota(order.begin(), order.end(), 0);
    const size_t nbatch = ds.train_count / static_cast<size_t>(tc.batch_size);

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = lr_at_epoch(epoch, tc);
        Rng shuffle_rng = Rng::substream(tc.seed, {0x0d0e0au, static_cast<uint64_t>(epoch)});
        shuffle_indices(order, shuffle_rng);

        double loss_acc = 0.0;
        for (size_t b = 0; b < nbatch; ++b) {
            const std::vector<size_t> idx(order.begin() + static_cast<long>(b * tc.batch_size),
                                          order.begin() + static_cast<long>((b + 1) * tc.batch_size));
            Rng eps_rng = Rng::substream(
                tc.seed, {0xe9511u, static_cast<uint64_t>(epoch), static_cast<uint64_t>(b)});
            Graph g;
            ModelVars v = bind_params(g, out.params, true);
            Var loss = detail::batch_loss(g, v, ds, idx, cfg, eps_rng, tc.kl_weight);
            const double lval = loss.value()(0);
            if (!std::isfinite(lval))
                throw EvalError("training diverged: loss=" + std::to_string(lval) + " at epoch " +
                                std::to_string(epoch) + ", batch " + std::to_string(b));
            g.backward(loss, true);

            const std::vector<Var> leaves = v.leaves();
            std::vector<Tensor> grads(leaves.size());
            for (size_t k = 0; k < leaves.size(); ++k) {
                const Tensor& gk = g.grad(leaves[k]);
                grads[k] = gk.data.empty() ? Tensor::zeros_like(*ptensors[k]) : gk;
            }
            adamax_step(state, ptensors, grads, lr, tc.beta1, tc.beta2);
            loss_acc += lval;
        }

        const EvalReport rep = evaluate(out.params, ds, cfg, Split::val);
        const auto t1 = std::chrono::steady_clock::now();
        out.metrics.train_loss.push_back(loss_acc / static_cast<double>(nbatch));
        out.metrics.val_nmse.push_back(rep.nmse_linear);
        out.metrics.val_nmse_db.push_back(rep.nmse_db);
        out.metrics.lr.push_back(lr);
        out.metrics.wall_ms.push_back(
            std::chrono::duration<double, std::milli>(t1 - t0).count());
        if (progress) progress(epoch, out.metrics);
    }
    return out;
}

}  // namespace lodex
