#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <catch2/catch_amalgamated.hpp>

#include "lodex/lodex.hpp"

// Drives the installed binary through std::system. Each scenario uses a tiny
// geometry so a full gen/train/eval cycle stays in the sub-second range.

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("lodex_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str(const std::string& rel) const { return (path / rel).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

size_t line_count(const std::string& text) {
    size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

// Runs the CLI with stdout+stderr captured to log_file; returns the exit code.
int run_cli(const std::string& args, const std::string& log_file) {
    const std::string cmd =
        std::string("\"") + LODEX_CLI_PATH + "\" " + args + " >\"" + log_file + "\" 2>&1";
    const int raw = std::system(cmd.c_str());
    REQUIRE(raw != -1);
    if (!WIFEXITED(raw)) return -1;
    return WEXITSTATUS(raw);
}

json tiny_config() {
    return json{{"channel", {{"N", 8}, {"Tu", 4}, {"Td", 3}, {"Np", 2}}},
                {"observation", {{"r", 0.5}, {"snr_db", 20.0}}},
                {"data", {{"count", 12}, {"seed", 5}}},
                {"net", {{"L", 8}, {"hidden", 8}, {"substeps", 1}}},
                {"train", {{"epochs", 2}, {"batch_size", 4}, {"seed", 2}}}};
}

void write_json(const std::string& path, const json& j) {
    std::ofstream os(path);
    os << j.dump(2) << "\n";
}

}  // namespace

TEST_CASE("the version flag succeeds", "[cli]") {
    TempDir td;
    const std::string log = td.str("log.txt");
    REQUIRE(run_cli("--version", log) == 0);
    REQUIRE_FALSE(slurp(log).empty());
}

TEST_CASE("gen-data, train, eval, and sweep chain together", "[cli]") {
    TempDir td;
    const std::string cfg = td.str("cfg.json");
    const std::string log = td.str("log.txt");
    write_json(cfg, tiny_config());

    SECTION("the full workflow produces the documented artifacts") {
        // gen-data writes the dataset plus the resolved config echo.
        int code = run_cli("gen-data --config \"" + cfg + "\" --out \"" + td.str("gen") + "\"", log);
        INFO(slurp(log));
        REQUIRE(code == 0);
        REQUIRE(fs::exists(td.str("gen/dataset.lodc")));
        REQUIRE(fs::exists(td.str("gen/config.json")));

        const json echo = json::parse(slurp(td.str("gen/config.json")));
        CHECK(echo.at("channel").at("N").get<int>() == 8);
        CHECK(echo.at("observation").at("r").get<double>() == 0.5);
        CHECK(echo.at("net").at("L").get<int>() == 8);
        CHECK(echo.contains("meta"));

        const lodex::Dataset ds = lodex::read_dataset(td.str("gen/dataset.lodc"));
        CHECK(ds.samples.size() == 12);
        CHECK(ds.train_count == 9);
        CHECK(ds.antenna_set == std::vector<int>{0, 2, 4, 6});
        CHECK(ds.samples[0].H.rows == 8);
        CHECK(ds.samples[0].H.cols == 7);
        CHECK(ds.samples[0].H_obs.rows == 4);
        CHECK(ds.samples[0].H_obs.cols == 4);

        // A second run with the same config reproduces the dataset byte for byte.
        code = run_cli("gen-data --config \"" + cfg + "\" --out \"" + td.str("gen2") + "\"", log);
        INFO(slurp(log));
        REQUIRE(code == 0);
        REQUIRE(slurp(td.str("gen2/dataset.lodc")) == slurp(td.str("gen/dataset.lodc")));

        // Overrides reach the generator.
        code = run_cli("gen-data --config \"" + cfg + "\" --set data.count=14 --out \"" +
                           td.str("gen3") + "\"",
                       log);
        INFO(slurp(log));
        REQUIRE(code == 0);
        CHECK(lodex::read_dataset(td.str("gen3/dataset.lodc")).samples.size() == 14);

        // train writes the checkpoint, the loss history, and the config echo.
        code = run_cli("train --config \"" + cfg + "\" --data \"" + td.str("gen/dataset.lodc") +
                           "\" --out \"" + td.str("run") + "\"",
                       log);
        INFO(slurp(log));
        REQUIRE(code == 0);
        REQUIRE(fs::exists(td.str("run/model.lodm")));
        REQUIRE(fs::exists(td.str("run/metrics.csv")));
        REQUIRE(fs::exists(td.str("run/config.json")));

        const std::string metrics = slurp(td.str("run/metrics.csv"));
        CHECK(metrics.find("# seed=2 ") != std::string::npos);
        CHECK(metrics.find("epoch,lr,train_loss,val_nmse_db\n") != std::string::npos);
        CHECK(metrics.find("\n0,0.004,") != std::string::npos);
        CHECK(line_count(metrics) == 4);

        const lodex::Checkpoint ck = lodex::read_checkpoint(td.str("run/model.lodm"));
        CHECK(ck.net.L == 8);
        CHECK(ck.net.M == 4);
        CHECK(ck.net.Tu == 4);
        CHECK(ck.header.at("extra").at("seed").get<int>() == 2);
        CHECK(ck.header.at("extra").at("data_seed").get<int>() == 5);

        // Training is reproducible end to end: same dataset, same checkpoint bytes.
        code = run_cli("train --config \"" + cfg + "\" --data \"" + td.str("gen/dataset.lodc") +
                           "\" --out \"" + td.str("run2") + "\"",
                       log);
        INFO(slurp(log));
        REQUIRE(code == 0);
        REQUIRE(slurp(td.str("run2/model.lodm")) == slurp(td.str("run/model.lodm")));
        REQUIRE(slurp(td.str("run2/metrics.csv")) == slurp(td.str("run/metrics.csv")));

        // eval scores the validation split and emits the per-block report.
        code = run_cli("eval --model \"" + td.str("run/model.lodm") + "\" --data \"" +
                           td.str("gen/dataset.lodc") + "\" --out \"" + td.str("ev") + "\"",
                       log);
        INFO(slurp(log));
        REQUIRE(code == 0);
        const std::string report = slurp(td.str("ev/report.csv"));
        CHECK(report.find("metric,nmse_db,nmse_linear\n") != std::string::npos);
        CHECK(report.find("overall,") != std::string::npos);
        CHECK(report.find("block_2,") != std::string::npos);
        CHECK(report.find("block_3,") == std::string::npos);

        // A dataset with a different uplink length is rejected as a config error.
        code = run_cli("gen-data --config \"" + cfg + "\" --set channel.Tu=5 --out \"" +
                           td.str("gen5") + "\"",
                       log);
        INFO(slurp(log));
        REQUIRE(code == 0);
        code = run_cli("eval --model \"" + td.str("run/model.lodm") + "\" --data \"" +
                           td.str("gen5/dataset.lodc") + "\" --out \"" + td.str("ev5") + "\"",
                       log);
        INFO(slurp(log));
        REQUIRE(code == 2);
    }

    SECTION("a noise sweep writes one sorted curve plus per-point artifacts") {
        const int code = run_cli("sweep --axis snr --values 20,10 --config \"" + cfg +
                                     "\" --set train.epochs=1 --out \"" + td.str("sw") + "\"",
                                 log);
        INFO(slurp(log));
        REQUIRE(code == 0);
        const std::string curve = slurp(td.str("sw/curve.csv"));
        CHECK(curve.find("axis_value,nmse_db,seed\n") != std::string::npos);
        const size_t row10 = curve.find("\n10,");
        const size_t row20 = curve.find("\n20,");
        REQUIRE(row10 != std::string::npos);
        REQUIRE(row20 != std::string::npos);
        CHECK(row10 < row20);
        CHECK(line_count(curve) == 4);
        for (const char* dir : {"sw/snr_10", "sw/snr_20"}) {
            CHECK(fs::exists(td.str(std::string(dir) + "/model.lodm")));
            CHECK(fs::exists(td.str(std::string(dir) + "/report.csv")));
            CHECK(fs::exists(td.str(std::string(dir) + "/metrics.csv")));
        }
    }
}

TEST_CASE("imported path files drive the generator", "[cli]") {
    TempDir td;
    const std::string cfg = td.str("cfg.json");
    const std::string log = td.str("log.txt");
    write_json(cfg, tiny_config());

    json samples = json::array();
    for (int s = 0; s < 12; ++s) {
        json rec = json::array();
        for (int p = 0; p < 2; ++p)
            rec.push_back({{"alpha_re", 0.4 + 0.05 * s},
                           {"alpha_im", 0.1 * p - 0.3},
                           {"tau_s", 20e-9 * (p + 1)},
                           {"theta_rad", 0.3 - 0.02 * s},
                           {"vartheta_rad", 0.05 * p}});
        samples.push_back(rec);
    }
    write_json(td.str("paths.json"), samples);

    int code = run_cli("gen-data --config \"" + cfg + "\" --paths \"" + td.str("paths.json") +
                           "\" --out \"" + td.str("gen") + "\"",
                       log);
    INFO(slurp(log));
    REQUIRE(code == 0);
    CHECK(lodex::read_dataset(td.str("gen/dataset.lodc")).samples.size() == 12);

    // One sample with the wrong path count is a config error.
    samples[3] = json::array({samples[3][0]});
    write_json(td.str("short.json"), samples);
    code = run_cli("gen-data --config \"" + cfg + "\" --paths \"" + td.str("short.json") +
                       "\" --out \"" + td.str("genx") + "\"",
                   log);
    INFO(slurp(log));
    REQUIRE(code == 2);

    // Structurally broken files are format errors.
    lodex::write_text_file(td.str("broken.json"), "{\"not\": \"an array\"}\n");
    code = run_cli("gen-data --config \"" + cfg + "\" --paths \"" + td.str("broken.json") +
                       "\" --out \"" + td.str("geny") + "\"",
                   log);
    INFO(slurp(log));
    REQUIRE(code == 3);
}

TEST_CASE("failures map to the documented exit codes", "[cli]") {
    TempDir td;
    const std::string cfg = td.str("cfg.json");
    const std::string log = td.str("log.txt");
    write_json(cfg, tiny_config());

    // Config problems exit 2.
    CHECK(run_cli("gen-data --config \"" + td.str("missing.json") + "\" --out \"" +
                      td.str("o1") + "\"",
                  log) == 2);
    CHECK(run_cli("gen-data --config \"" + cfg + "\" --set nonsense --out \"" + td.str("o2") +
                      "\"",
                  log) == 2);
    CHECK(run_cli("gen-data --config \"" + cfg + "\" --set channel.bogus=1 --out \"" +
                      td.str("o3") + "\"",
                  log) == 2);
    CHECK(run_cli("gen-data --config \"" + cfg + "\" --set channel.N=0 --out \"" + td.str("o4") +
                      "\"",
                  log) == 2);
    CHECK(run_cli("sweep --axis bogus --values 1 --config \"" + cfg + "\" --out \"" +
                      td.str("o5") + "\"",
                  log) == 2);
    CHECK(run_cli("sweep --axis snr --values 10,,20 --config \"" + cfg + "\" --out \"" +
                      td.str("o6") + "\"",
                  log) == 2);
    CHECK(run_cli("sweep --axis r --values 2 --config \"" + cfg + "\" --out \"" + td.str("o7") +
                      "\"",
                  log) == 2);

    // Missing or corrupt binary artifacts exit 3.
    CHECK(run_cli("train --config \"" + cfg + "\" --data \"" + td.str("missing.lodc") +
                      "\" --out \"" + td.str("o8") + "\"",
                  log) == 3);
    CHECK(run_cli("eval --model \"" + td.str("missing.lodm") + "\" --data \"" +
                      td.str("missing.lodc") + "\" --out \"" + td.str("o9") + "\"",
                  log) == 3);
    lodex::write_text_file(td.str("junk.lodc"), "junk bytes, not a dataset");
    CHECK(run_cli("train --config \"" + cfg + "\" --data \"" + td.str("junk.lodc") +
                      "\" --out \"" + td.str("o10") + "\"",
                  log) == 3);
}
