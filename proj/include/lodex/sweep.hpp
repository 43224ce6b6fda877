#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lodex/config.hpp"
#include "lodex/io.hpp"
#include "lodex/training.hpp"

// The paper-style experiment sweeps. snr and r train one model per axis
// value; td trains a single model at the largest extrapolation length and
// scores every prefix; epoch reads the validation history of one run.
// All rows land in one curve.csv sorted by axis value.

namespace lodex {

enum class SweepAxis : uint8_t { snr, r, td, epoch };

inline SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "snr") return SweepAxis::snr;
    if (s == "r") return SweepAxis::r;
    if (s == "td") return SweepAxis::td;
    if (s == "epoch") return SweepAxis::epoch;
    throw ConfigError("sweep axis must be one of snr, r, td, epoch; got \"" + s + "\"");
}

inline const char* to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::snr: return "snr";
        case SweepAxis::r: return "r";
        case SweepAxis::td: return "td";
        default: return "epoch";
    }
}

inline void validate_sweep_values(SweepAxis axis, const std::vector<double>& values) {
    if (values.empty()) throw ConfigError("sweep: values must be non-empty");
    for (double v : values) {
        switch (axis) {
            case SweepAxis::snr:
                if (!std::isfinite(v)) throw ConfigError("sweep snr: values must be finite dB");
                break;
            case SweepAxis::r:
                if (!(v > 0.0 && v <= 1.0)) throw ConfigError("sweep r: values must lie in (0, 1]");
                break;
            case SweepAxis::td:
            case SweepAxis::epoch:
                if (!(v >= 1.0) || v != std::floor(v))
                    throw ConfigError(std::string("sweep ") + to_string(axis) +
                                      ": values must be integers >= 1");
                break;
        }
    }
}

namespace detail {

inline std::string point_dir(const std::string& out, SweepAxis axis, double value) {
    return out + "/" + to_string(axis) + "_" + fmt_g(value);
}

// Train on a freshly built dataset and report validation NMSE; artifacts go
// to dir when non-empty.
inline EvalReport sweep_train_eval(const Config& cfg, const std::string& dir,
                                   const std::function<void(const std::string&)>& log,
                                   TrainResult* result_out = nullptr) {
    const Dataset ds = build_dataset(cfg.channel, cfg.observation, cfg.paths, cfg.data.count,
                                     cfg.data.seed, cfg.data.train_fraction);
    TrainResult res = train(ds, cfg.net, cfg.train, [&](int epoch, const RunMetrics& m) {
        if (log && (epoch % 10 == 9 || epoch + 1 == cfg.train.epochs))
            log("  epoch " + std::to_string(epoch) + " loss=" + fmt_g(m.train_loss.back()) +
                " val=" + fmt_g(m.val_nmse_db.back()) + " dB");
    });
    const EvalReport rep = evaluate(res.params, ds, cfg.net, Split::val);
    if (!dir.empty()) {
        std::filesystem::create_directories(dir);
        write_text_file(dir + "/config.json", config_echo_json(cfg).dump(2) + "\n");
        write_metrics_csv(dir + "/metrics.csv", res.metrics, cfg.train.seed);
        write_checkpoint(dir + "/model.lodm", res.params, cfg.net,
                         {{"seed", cfg.train.seed}, {"data_seed", cfg.data.seed}});
        write_report_csv(dir + "/report.csv", rep, cfg.train.seed);
    }
    if (result_out) *result_out = std::move(res);
    return rep;
}

}  // namespace detail

// Returns curve rows sorted by axis value; per-point artifacts are written
// under out_dir when it is non-empty.
inline std::vector<SweepRow> run_sweep(const Config& base, SweepAxis axis,
                                       std::vector<double> values, const std::string& out_dir,
                                       const std::function<void(const std::string&)>& log = {}) {
    validate_sweep_values(axis, values);
    std::sort(values.begin(), values.end());
    std::vector<SweepRow> rows;

    switch (axis) {
        case SweepAxis::snr: {
            for (double v : values) {
                Config cfg = base;
                cfg.observation.snr_db = v;
                cfg.finalize();
                if (log) log("sweep snr=" + fmt_g(v));
                const EvalReport rep = detail::sweep_train_eval(
                    cfg, out_dir.empty() ? "" : detail::point_dir(out_dir, axis, v), log);
                rows.push_back({v, rep.nmse_db, cfg.train.seed});
            }
            break;
        }
        case SweepAxis::r: {
            for (double v : values) {
                Config cfg = base;
                cfg.observation.r = v;
                cfg.finalize();
                if (log) log("sweep r=" + fmt_g(v) + " (M=" + std::to_string(cfg.net.M) + ")");
                const EvalReport rep = detail::sweep_train_eval(
                    cfg, out_dir.empty() ? "" : detail::point_dir(out_dir, axis, v), log);
                rows.push_back({v, rep.nmse_db, cfg.train.seed});
            }
            break;
        }
        case SweepAxis::td: {
            const int max_td = static_cast<int>(values.back());
            Config cfg = base;
            cfg.channel.Td = max_td;
            cfg.finalize();
            if (log) log("sweep td: training one model at Td=" + std::to_string(max_td));
            const Dataset ds = build_dataset(cfg.channel, cfg.observation, cfg.paths,
                                             cfg.data.count, cfg.data.seed, cfg.data.train_fraction);
            TrainResult res = train(ds, cfg.net, cfg.train);
            if (!out_dir.empty()) {
                const std::string dir = detail::point_dir(out_dir, axis, max_td);
                std::filesystem::create_directories(dir);
                write_text_file(dir + "/config.json", config_echo_json(cfg).dump(2) + "\n");
                write_metrics_csv(dir + "/metrics.csv", res.metrics, cfg.train.seed);
                write_checkpoint(dir + "/model.lodm", res.params, cfg.net,
                                 {{"seed", cfg.train.seed}, {"data_seed", cfg.data.seed}});
            }
            const std::vector<size_t> idx = split_indices(ds, Split::val);
            const std::vector<CMat> preds = predict(res.params, ds, cfg.net, idx);
            for (double v : values) {
                const Nmse m = prefix_nmse(preds, ds, idx, static_cast<int>(v));
                rows.push_back({v, m.db, cfg.train.seed});
            }
            break;
        }
        case SweepAxis::epoch: {
            const int max_epoch = static_cast<int>(values.back());
            Config cfg = base;
            cfg.train.epochs = max_epoch;
            cfg.finalize();
            if (log) log("sweep epoch: training one run to epoch " + std::to_string(max_epoch));
            TrainResult res;
            detail::sweep_train_eval(
                cfg, out_dir.empty() ? "" : detail::point_dir(out_dir, axis, max_epoch), log, &res);
            for (double v : values) {
                const size_t e = static_cast<size_t>(v) - 1;
                rows.push_back({v, res.metrics.val_nmse_db[e], cfg.train.seed});
            }
            break;
        }
    }

    std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        return a.axis_value != b.axis_value ? a.axis_value < b.axis_value : a.seed < b.seed;
    });
    return rows;
}

}  // namespace lodex
