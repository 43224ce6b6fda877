#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lodex/channel.hpp"
#include "lodex/net.hpp"
#include "lodex/training.hpp"
#include "lodex/version.hpp"

// JSON configuration: paper-table defaults, deep merge of the user file,
// dotted-key overrides, strict unknown-key rejection, and a resolved echo
// that reloads to the identical configuration.

namespace lodex {

using json = nlohmann::json;

struct DataConfig {
    size_t count = 19910;
    double train_fraction = 0.8;
    uint64_t seed = 7;

    void validate() const {
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw ConfigError("data.train_fraction must be in (0, 1)");
    }
};

struct Config {
    ChannelScenario channel;
    ObservationConfig observation;
    PathDistribution paths;
    DataConfig data;
    NetConfig net;  // dimensions are synced from channel/observation
    TrainConfig train;

    void finalize() {
        channel.validate();
        observation.validate(channel.N);
        paths.validate();
        data.validate();
        net.M = observation.antenna_count(channel.N);
        net.N = channel.N;
        net.Tu = channel.Tu;
        net.Td = channel.Td;
        net.validate();
        train.validate();
        train.snr_db = observation.snr_db;
    }
};

namespace cfgjson {

inline json channel_to_json(const ChannelScenario& c) {
    return {{"N", c.N},       {"fc_hz", c.fc}, {"d_over_lambda", c.d_over_lambda},
            {"Np", c.Np},     {"v_kmh", c.v * 3.6}, {"Lc", c.Lc},
            {"Ts_s", c.Ts},   {"Tu", c.Tu},    {"Td", c.Td}};
}

inline ChannelScenario channel_from_json(const json& j) {
    ChannelScenario c;
    c.N = j.at("N").get<int>();
    c.fc = j.at("fc_hz").get<double>();
    c.d_over_lambda = j.at("d_over_lambda").get<double>();
    c.Np = j.at("Np").get<int>();
    c.v = j.at("v_kmh").get<double>() / 3.6;
    c.Lc = j.at("Lc").get<int>();
    c.Ts = j.at("Ts_s").get<double>();
    c.Tu = j.at("Tu").get<int>();
    c.Td = j.at("Td").get<int>();
    return c;
}

inline json observation_to_json(const ObservationConfig& o) {
    json j = {{"r", o.r},
              {"selection", o.selection == AntennaScheme::uniform ? "uniform" : "random"},
              {"selection_seed", o.selection_seed}};
    j["snr_db"] = o.snr_db ? json(*o.snr_db) : json(nullptr);
    return j;
}

inline ObservationConfig observation_from_json(const json& j) {
    ObservationConfig o;
    o.r = j.at("r").get<double>();
    const json& s = j.at("snr_db");
    o.snr_db = s.is_null() ? std::nullopt : std::optional<double>(s.get<double>());
    const std::string sel = j.at("selection").get<std::string>();
    if (sel == "uniform")
        o.selection = AntennaScheme::uniform;
    else if (sel == "random")
        o.selection = AntennaScheme::random;
    else
        throw ConfigError("observation.selection must be \"uniform\" or \"random\"");
    o.selection_seed = j.at("selection_seed").get<uint64_t>();
    return o;
}

inline json paths_to_json(const PathDistribution& p) {
    return {{"profile", p.profile == PathDistribution::GainProfile::exponential ? "exponential" : "flat"},
            {"decay", p.decay},
            {"tau_max_s", p.tau_max},
            {"theta_max_deg", p.theta_max_deg},
            {"vartheta_max_deg", p.vartheta_max_deg}};
}

inline PathDistribution paths_from_json(const json& j) {
    PathDistribution p;
    const std::string prof = j.at("profile").get<std::string>();
    if (prof == "exponential")
        p.profile = PathDistribution::GainProfile::exponential;
    else if (prof == "flat")
        p.profile = PathDistribution::GainProfile::flat;
    else
        throw ConfigError("paths.profile must be \"exponential\" or \"flat\"");
    p.decay = j.at("decay").get<double>();
    p.tau_max = j.at("tau_max_s").get<double>();
    p.theta_max_deg = j.at("theta_max_deg").get<double>();
    p.vartheta_max_deg = j.at("vartheta_max_deg").get<double>();
    return p;
}

// Config section: tunable fields only; dimensions come from channel/observation.
inline json net_to_json(const NetConfig& n) {
    return {{"L", n.L},
            {"hidden", n.hidden},
            {"method", to_string(n.method)},
            {"substeps", n.substeps},
            {"skip_first_obs", n.skip_first_obs}};
}

inline void net_from_json(const json& j, NetConfig& n) {
    n.L = j.at("L").get<int>();
    n.hidden = j.at("hidden").get<int>();
    n.method = ode_method_from_string(j.at("method").get<std::string>());
    n.substeps = j.at("substeps").get<int>();
    n.skip_first_obs = j.at("skip_first_obs").get<bool>();
}

// Checkpoint header: the full network geometry.
inline json net_to_json_full(const NetConfig& n) {
    json j = net_to_json(n);
    j["M"] = n.M;
    j["N"] = n.N;
    j["Tu"] = n.Tu;
    j["Td"] = n.Td;
    return j;
}

inline NetConfig net_from_json_full(const json& j) {
    NetConfig n;
    net_from_json(j, n);
    n.M = j.at("M").get<int>();
    n.N = j.at("N").get<int>();
    n.Tu = j.at("Tu").get<int>();
    n.Td = j.at("Td").get<int>();
    return n;
}

inline json train_to_json(const TrainConfig& t) {
    return {{"batch_size", t.batch_size}, {"epochs", t.epochs},
            {"lr0", t.lr0},               {"halve_every", t.halve_every},
            {"beta1", t.beta1},           {"beta2", t.beta2},
            {"seed", t.seed},             {"kl_weight", t.kl_weight}};
}

inline TrainConfig train_from_json(const json& j) {
    TrainConfig t;
    t.batch_size = j.at("batch_size").get<int>();
    t.epochs = j.at("epochs").get<int>();
    t.lr0 = j.at("lr0").get<double>();
    t.halve_every = j.at("halve_every").get<int>();
    t.beta1 = j.at("beta1").get<double>();
    t.beta2 = j.at("beta2").get<double>();
    t.seed = j.at("seed").get<uint64_t>();
    t.kl_weight = j.at("kl_weight").get<double>();
    return t;
}

inline json data_to_json(const DataConfig& d) {
    return {{"count", d.count}, {"train_fraction", d.train_fraction}, {"seed", d.seed}};
}

inline DataConfig data_from_json(const json& j) {
    DataConfig d;
    d.count = j.at("count").get<size_t>();
    d.train_fraction = j.at("train_fraction").get<double>();
    d.seed = j.at("seed").get<uint64_t>();
    return d;
}

}  // namespace cfgjson

inline json config_to_json(const Config& c) {
    return {{"channel", cfgjson::channel_to_json(c.channel)},
            {"observation", cfgjson::observation_to_json(c.observation)},
            {"paths", cfgjson::paths_to_json(c.paths)},
            {"data", cfgjson::data_to_json(c.data)},
            {"net", cfgjson::net_to_json(c.net)},
            {"train", cfgjson::train_to_json(c.train)}};
}

inline Config config_from_json(const json& j) {
    Config c;
    c.channel = cfgjson::channel_from_json(j.at("channel"));
    c.observation = cfgjson::observation_from_json(j.at("observation"));
    c.paths = cfgjson::paths_from_json(j.at("paths"));
    c.data = cfgjson::data_from_json(j.at("data"));
    cfgjson::net_from_json(j.at("net"), c.net);
    c.train = cfgjson::train_from_json(j.at("train"));
    c.finalize();
    return c;
}

inline json default_config_json() { return config_to_json(Config{}); }

namespace cfgjson {

inline void merge_into(json& base, const json& overlay) {
    if (!overlay.is_object() || !base.is_object()) {
        base = overlay;
        return;
    }
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
            merge_into(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
}

// Every key in j must exist in the reference tree; reference nulls mark
// nullable numbers. The meta subtree is free-form and skipped.
inline void check_keys(const json& j, const json& ref, const std::string& prefix) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (prefix.empty() && it.key() == "meta") continue;
        if (!ref.contains(it.key())) throw ConfigError("unknown config key: " + path);
        const json& rv = ref[it.key()];
        const json& v = it.value();
        if (rv.is_object()) {
            if (!v.is_object()) throw ConfigError("config key " + path + " must be an object");
            check_keys(v, rv, path);
        } else if (rv.is_null()) {
            if (!v.is_null() && !v.is_number())
                throw ConfigError("config key " + path + " must be a number or null");
        } else if (rv.is_number()) {
            if (!v.is_number()) throw ConfigError("config key " + path + " must be a number");
        } else if (rv.is_string()) {
            if (!v.is_string()) throw ConfigError("config key " + path + " must be a string");
        } else if (rv.is_boolean()) {
            if (!v.is_boolean()) throw ConfigError("config key " + path + " must be a boolean");
        }
    }
}

// Reference tree with nullable fields represented as null.
inline json reference_config_json() {
    json ref = default_config_json();
    ref["observation"]["snr_db"] = nullptr;
    return ref;
}

inline void apply_override(json& j, const std::string& kv) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like key.path=value, got \"" + kv + "\"");
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // bare strings need no quotes
    }
    json* node = &j;
    size_t pos = 0;
    for (;;) {
        const size_t dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (key.empty()) throw ConfigError("override has an empty key segment: \"" + kv + "\"");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = json::object();
        node = &(*node)[key];
        pos = dot + 1;
    }
}

}  // namespace cfgjson

// defaults <- file <- overrides, then strict validation. A zero-byte file
// counts as an empty object.
inline Config load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    json file_json = json::object();
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
        try {
            file_json = json::parse(text);
        } catch (const json::exception& e) {
            throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
        }
    }
    if (!file_json.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");

    json merged = default_config_json();
    cfgjson::merge_into(merged, file_json);
    for (const std::string& kv : overrides) cfgjson::apply_override(merged, kv);
    cfgjson::check_keys(merged, cfgjson::reference_config_json(), "");
    try {
        return config_from_json(merged);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config value error: ") + e.what());
    }
}

// Resolved echo with the producing code version; reloads to the same config.
inline json config_echo_json(const Config& c) {
    json j = config_to_json(c);
    j["meta"] = {{"version", kVersion}};
    return j;
}

}  // namespace lodex
