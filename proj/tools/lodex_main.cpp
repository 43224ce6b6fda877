#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lodex/lodex.hpp"

// lodex: generate channel datasets, train/evaluate the extrapolation network,
// and run the sweep experiments. All knobs live in the JSON config; --set
// applies dotted-key overrides on top. LODEX_THREADS caps worker threads.

namespace {

namespace fs = std::filesystem;

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> out;
    size_t pos = 0;
    while (pos <= csv.size()) {
        const size_t comma = csv.find(',', pos);
        const std::string tok = csv.substr(pos, comma == std::string::npos ? comma : comma - pos);
        if (tok.empty()) throw lodex::ConfigError("--values has an empty entry: \"" + csv + "\"");
        try {
            size_t used = 0;
            const double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            out.push_back(v);
        } catch (const std::exception&) {
            throw lodex::ConfigError("--values entry is not a number: \"" + tok + "\"");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

void echo_config(const lodex::Config& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    lodex::write_text_file(out_dir + "/config.json",
                           lodex::config_echo_json(cfg).dump(2) + "\n");
}

int cmd_gen_data(const std::string& config_path, const std::vector<std::string>& sets,
                 const std::string& out_dir, const std::string& paths_file) {
    lodex::Config cfg = lodex::load_config(config_path, sets);
    echo_config(cfg, out_dir);
    std::cerr << "generating " << cfg.data.count << " samples (N=" << cfg.channel.N
              << ", M=" << cfg.net.M << ", Tu=" << cfg.channel.Tu << ", Td=" << cfg.channel.Td
              << ", snr="
              << (cfg.observation.snr_db ? lodex::fmt_g(*cfg.observation.snr_db) + " dB"
                                         : std::string("noise-free"))
              << ")\n";
    const lodex::Dataset ds =
        paths_file.empty()
            ? lodex::build_dataset(cfg.channel, cfg.observation, cfg.paths, cfg.data.count,
                                   cfg.data.seed, cfg.data.train_fraction)
            : lodex::build_dataset_from_paths(
                  cfg.channel, cfg.observation,
                  lodex::read_path_file(paths_file, cfg.channel), cfg.data.seed,
                  cfg.data.train_fraction);
    const std::string path = out_dir + "/dataset.lodc";
    lodex::write_dataset(path, ds);
    std::cerr << "wrote " << path << " (train=" << ds.train_count
              << ", val=" << ds.val_count() << ", norm=" << lodex::fmt_g(ds.norm_constant)
              << ")\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& data_path, const std::string& out_dir) {
    lodex::Config cfg = lodex::load_config(config_path, sets);
    const lodex::Dataset ds = lodex::read_dataset(data_path);
    // The dataset fixes the geometry; the config supplies network and
    // optimizer knobs.
    cfg.channel = ds.scenario;
    cfg.observation = ds.observation;
    cfg.paths = ds.paths;
    cfg.finalize();
    echo_config(cfg, out_dir);

    std::cerr << "training on " << ds.train_count << " samples (val " << ds.val_count()
              << "), L=" << cfg.net.L << ", epochs=" << cfg.train.epochs << "\n";
    const lodex::TrainResult res =
        lodex::train(ds, cfg.net, cfg.train, [&](int epoch, const lodex::RunMetrics& m) {
            std::cerr << "epoch " << epoch << " lr=" << lodex::fmt_g(m.lr.back())
                      << " loss=" << lodex::fmt_g(m.train_loss.back())
                      << " val=" << lodex::fmt_g(m.val_nmse_db.back()) << " dB ("
                      << lodex::fmt_g(m.wall_ms.back()) << " ms)\n";
        });
    lodex::write_metrics_csv(out_dir + "/metrics.csv", res.metrics, cfg.train.seed);
    lodex::write_checkpoint(out_dir + "/model.lodm", res.params, cfg.net,
                            {{"seed", cfg.train.seed}, {"data_seed", ds.seed}});
    std::cerr << "wrote " << out_dir << "/model.lodm and metrics.csv\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& out_dir) {
    const lodex::Checkpoint ck = lodex::read_checkpoint(model_path);
    const lodex::Dataset ds = lodex::read_dataset(data_path);
    lodex::check_dataset_matches(ds, ck.net);
    const lodex::EvalReport rep = lodex::evaluate(ck.params, ds, ck.net, lodex::Split::val);
    fs::create_directories(out_dir);
    uint64_t seed = 0;
    if (ck.header.contains("extra") && ck.header["extra"].contains("seed"))
        seed = ck.header["extra"]["seed"].get<uint64_t>();
    lodex::write_report_csv(out_dir + "/report.csv", rep, seed);
    std::cerr << "val NMSE " << lodex::fmt_g(rep.nmse_db) << " dB over " << ds.val_count()
              << " samples; wrote " << out_dir << "/report.csv\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& axis_str, const std::string& values_csv,
              const std::string& out_dir) {
    lodex::Config cfg = lodex::load_config(config_path, sets);
    const lodex::SweepAxis axis = lodex::sweep_axis_from_string(axis_str);
    const std::vector<double> values = parse_values(values_csv);
    echo_config(cfg, out_dir);
    const std::vector<lodex::SweepRow> rows = lodex::run_sweep(
        cfg, axis, values, out_dir, [](const std::string& line) { std::cerr << line << "\n"; });
    lodex::write_curve_csv(out_dir + "/curve.csv", rows);
    std::cerr << "wrote " << out_dir << "/curve.csv (" << rows.size() << " rows)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-ODE channel extrapolation"};
    app.set_version_flag("--version", lodex::kVersion);
    app.require_subcommand(1);

    std::string config_path, data_path, model_path, out_dir, axis, values, paths_file;
    std::vector<std::string> sets;

    CLI::App* gen = app.add_subcommand("gen-data", "synthesize a channel dataset");
    gen->add_option("--config", config_path, "JSON config file")->required();
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--set", sets, "dotted-key override, e.g. channel.N=16");
    gen->add_option("--paths", paths_file, "JSON file of imported per-sample path parameters");

    CLI::App* tr = app.add_subcommand("train", "train a model on a dataset");
    tr->add_option("--config", config_path, "JSON config file")->required();
    tr->add_option("--data", data_path, "dataset file (.lodc)")->required();
    tr->add_option("--out", out_dir, "output directory")->required();
    tr->add_option("--set", sets, "dotted-key override");

    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    ev->add_option("--model", model_path, "checkpoint file (.lodm)")->required();
    ev->add_option("--data", data_path, "dataset file (.lodc)")->required();
    ev->add_option("--out", out_dir, "output directory")->required();

    CLI::App* sw = app.add_subcommand("sweep", "run an experiment sweep");
    sw->add_option("--axis", axis, "one of snr, r, td, epoch")->required();
    sw->add_option("--values", values, "comma-separated axis values")->required();
    sw->add_option("--config", config_path, "JSON config file")->required();
    sw->add_option("--out", out_dir, "output directory")->required();
    sw->add_option("--set", sets, "dotted-key override");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, sets, out_dir, paths_file);
        if (tr->parsed()) return cmd_train(config_path, sets, data_path, out_dir);
        if (ev->parsed()) return cmd_eval(model_path, data_path, out_dir);
        if (sw->parsed()) return cmd_sweep(config_path, sets, axis, values, out_dir);
    } catch (const lodex::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const lodex::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const lodex::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const lodex::EvalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
