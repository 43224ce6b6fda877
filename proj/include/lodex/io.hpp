#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "lodex/config.hpp"
#include "lodex/training.hpp"

// Binary containers and CSV emitters. Both containers share one discipline:
// 4-byte magic, u32 little-endian version, u32 JSON header length, JSON
// header, raw little-endian payload. Dataset payloads are f32 (bulky inputs),
// checkpoints are f64 (optimizer-grade fidelity).

namespace lodex {

struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& m) : std::runtime_error(m) {}
};

namespace bin {

inline void put_u32(std::ostream& os, uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
    put_u32(os, static_cast<uint32_t>(v & 0xffffffffu));
    put_u32(os, static_cast<uint32_t>(v >> 32));
}

inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<uint64_t>(v)); }

// Reader that tracks the absolute byte offset for error messages.
struct Reader {
    std::istream& is;
    size_t offset = 0;

    void bytes(char* dst, size_t n, const char* what) {
        is.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<size_t>(is.gcount()) != n)
            throw FormatError(std::string("truncated file: expected ") + what + " at offset " +
                              std::to_string(offset));
        offset += n;
    }

    uint32_t u32(const char* what) {
        unsigned char b[4];
        bytes(reinterpret_cast<char*>(b), 4, what);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }

    uint64_t u64(const char* what) {
        const uint64_t lo = u32(what);
        return lo | (static_cast<uint64_t>(u32(what)) << 32);
    }

    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

    bool at_eof() {
        is.peek();
        return is.eof();
    }
};

inline json read_header(Reader& r, const char* magic, const std::string& path) {
    char m[4];
    r.bytes(m, 4, "magic");
    if (std::string(m, 4) != magic)
        throw FormatError(path + ": bad magic at offset 0, expected \"" + magic + "\"");
    const uint32_t version = r.u32("version");
    if (version != 1)
        throw FormatError(path + ": unsupported version " + std::to_string(version) +
                          " at offset 4");
    const uint32_t hlen = r.u32("header length");
    std::string htext(hlen, '\0');
    r.bytes(htext.data(), hlen, "JSON header");
    try {
        return json::parse(htext);
    } catch (const json::exception& e) {
        throw FormatError(path + ": header is not valid JSON at offset 12: " + e.what());
    }
}

inline void write_header(std::ostream& os, const char* magic, const json& header) {
    os.write(magic, 4);
    put_u32(os, 1);
    const std::string htext = header.dump();
    put_u32(os, static_cast<uint32_t>(htext.size()));
    os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
}

}  // namespace bin

// ---- dataset container ("LODC") -------------------------------------------

inline void write_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);

    json header = {{"scenario", cfgjson::channel_to_json(ds.scenario)},
                   {"observation", cfgjson::observation_to_json(ds.observation)},
                   {"paths", cfgjson::paths_to_json(ds.paths)},
                   {"antenna_set", ds.antenna_set},
                   {"norm_constant", ds.norm_constant},
                   {"seed", ds.seed},
                   {"sample_count", ds.samples.size()},
                   {"train_count", ds.train_count},
                   {"version_str", kVersion}};
    bin::write_header(os, "LODC", header);

    for (const ChannelSample& s : ds.samples) {
        for (const cplx& v : s.H.a) {
            bin::put_f32(os, static_cast<float>(v.real()));
            bin::put_f32(os, static_cast<float>(v.imag()));
        }
        for (const cplx& v : s.H_obs.a) {
            bin::put_f32(os, static_cast<float>(v.real()));
            bin::put_f32(os, static_cast<float>(v.imag()));
        }
    }
    os.flush();
    if (!os) throw IoError("write failed: " + path);
}

inline Dataset read_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open dataset: " + path);
    bin::Reader r{is};
    const json header = bin::read_header(r, "LODC", path);

    Dataset ds;
    try {
        ds.scenario = cfgjson::channel_from_json(header.at("scenario"));
        ds.observation = cfgjson::observation_from_json(header.at("observation"));
        ds.paths = cfgjson::paths_from_json(header.at("paths"));
        ds.antenna_set = header.at("antenna_set").get<std::vector<int>>();
        ds.norm_constant = header.at("norm_constant").get<double>();
        ds.seed = header.at("seed").get<uint64_t>();
        ds.train_count = header.at("train_count").get<size_t>();
        ds.samples.resize(header.at("sample_count").get<size_t>());
    } catch (const json::exception& e) {
        throw FormatError(path + ": dataset header field error: " + e.what());
    }
    ds.scenario.validate();
    ds.observation.validate(ds.scenario.N);
    const int M = ds.observation.antenna_count(ds.scenario.N);
    if (static_cast<int>(ds.antenna_set.size()) != M)
        throw FormatError(path + ": header antenna_set length " +
                          std::to_string(ds.antenna_set.size()) + " does not match M=" +
                          std::to_string(M));
    if (ds.train_count > ds.samples.size())
        throw FormatError(path + ": header train_count exceeds sample_count");

    const int N = ds.scenario.N, T = ds.scenario.total_blocks(), Tu = ds.scenario.Tu;
    const size_t per_sample = (static_cast<size_t>(N) * T + static_cast<size_t>(M) * Tu) * 8;
    std::vector<char> buf(per_sample);
    for (ChannelSample& s : ds.samples) {
        r.bytes(buf.data(), per_sample, "sample payload");
        const char* p = buf.data();
        auto take_f32 = [&p]() {
            uint32_t u;
            std::memcpy(&u, p, 4);
            p += 4;
            return std::bit_cast<float>(u);
        };
        s.H = CMat(N, T);
        for (cplx& v : s.H.a) {
            const float re = take_f32();
            const float im = take_f32();
            v = cplx(re, im);
        }
        s.H_obs = CMat(M, Tu);
        for (cplx& v : s.H_obs.a) {
            const float re = take_f32();
            const float im = take_f32();
            v = cplx(re, im);
        }
        s.antenna_set = ds.antenna_set;
        s.snr_db = ds.observation.snr_db;
    }
    if (!r.at_eof())
        throw FormatError(path + ": trailing bytes after payload at offset " +
                          std::to_string(r.offset));
    return ds;
}

// ---- checkpoint container ("LODM") -----------------------------------------

inline void write_checkpoint(const std::string& path, const ModelParams& params,
                             const NetConfig& cfg, const json& extra = json::object()) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);

    json groups = json::array();
    params.for_each_group([&](const char* name, const FnnParams& f) {
        json layers = json::array();
        for (size_t l = 0; l < f.W.size(); ++l)
            layers.push_back({{"rows", f.W[l].shape[0]}, {"cols", f.W[l].shape[1]}});
        groups.push_back({{"name", name}, {"layers", layers}});
    });
    json header = {{"net", cfgjson::net_to_json_full(cfg)},
                   {"groups", groups},
                   {"version_str", kVersion},
                   {"extra", extra}};
    bin::write_header(os, "LODM", header);

    params.for_each_group([&](const char*, const FnnParams& f) {
        for (size_t l = 0; l < f.W.size(); ++l) {
            for (double v : f.W[l].data) bin::put_f64(os, v);
            for (double v : f.b[l].data) bin::put_f64(os, v);
        }
    });
    os.flush();
    if (!os) throw IoError("write failed: " + path);
}

struct Checkpoint {
    NetConfig net;
    ModelParams params;
    json header;
};

// The payload must match the geometry the embedded NetConfig prescribes; an
// expected config (when given) must match the embedded one field for field.
inline Checkpoint read_checkpoint(const std::string& path,
                                  const std::optional<NetConfig>& expected = std::nullopt) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    bin::Reader r{is};
    const json header = bin::read_header(r, "LODM", path);

    Checkpoint ck;
    ck.header = header;
    try {
        ck.net = cfgjson::net_from_json_full(header.at("net"));
    } catch (const json::exception& e) {
        throw FormatError(path + ": checkpoint header field error: " + e.what());
    }
    ck.net.validate();
    if (expected) {
        auto need = [&](bool ok, const std::string& field) {
            if (!ok)
                throw FormatError(path + ": checkpoint net." + field +
                                  " does not match the requested configuration");
        };
        need(ck.net.L == expected->L, "L");
        need(ck.net.hidden == expected->hidden, "hidden");
        need(ck.net.M == expected->M, "M");
        need(ck.net.N == expected->N, "N");
        need(ck.net.Tu == expected->Tu, "Tu");
        need(ck.net.Td == expected->Td, "Td");
        need(ck.net.method == expected->method, "method");
        need(ck.net.substeps == expected->substeps, "substeps");
        need(ck.net.skip_first_obs == expected->skip_first_obs, "skip_first_obs");
    }

    ck.params = zero_params(ck.net);
    size_t gi = 0;
    const json& groups = header.at("groups");
    ck.params.for_each_group([&](const char* name, FnnParams& f) {
        if (gi >= groups.size() || groups[gi].at("name").get<std::string>() != name)
            throw FormatError(path + ": checkpoint group order mismatch, expected \"" +
                              std::string(name) + "\" at group " + std::to_string(gi));
        const json& layers = groups[gi].at("layers");
        if (layers.size() != f.W.size())
            throw FormatError(path + ": group \"" + name + "\" has " +
                              std::to_string(layers.size()) + " layers, config wants " +
                              std::to_string(f.W.size()));
        for (size_t l = 0; l < f.W.size(); ++l) {
            const int rows = layers[l].at("rows").get<int>();
            const int cols = layers[l].at("cols").get<int>();
            if (rows != f.W[l].shape[0] || cols != f.W[l].shape[1])
                throw FormatError(path + ": group \"" + name + "\" layer " + std::to_string(l) +
                                  " is " + std::to_string(rows) + "x" + std::to_string(cols) +
                                  ", config wants " + std::to_string(f.W[l].shape[0]) + "x" +
                                  std::to_string(f.W[l].shape[1]));
            for (double& v : f.W[l].data) v = r.f64("weights");
            for (double& v : f.b[l].data) v = r.f64("biases");
        }
        ++gi;
    });
    if (!r.at_eof())
        throw FormatError(path + ": trailing bytes after payload at offset " +
                          std::to_string(r.offset));
    return ck;
}

// ---- path-parameter import ---------------------------------------------------

// JSON import hook for externally supplied (e.g. ray-traced) path parameters:
// an array of samples, each an array of records
// {alpha_re, alpha_im, tau_s, theta_rad, vartheta_rad}. Doppler shifts are
// derived from the scenario.
inline std::vector<std::vector<PathParams>> read_path_file(const std::string& path,
                                                           const ChannelScenario& sc) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open path file: " + path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw FormatError(path + ": not valid JSON: " + e.what());
    }
    if (!j.is_array()) throw FormatError(path + ": top level must be an array of samples");
    const double lambda = sc.wavelength();
    std::vector<std::vector<PathParams>> out;
    out.reserve(j.size());
    try {
        for (size_t i = 0; i < j.size(); ++i) {
            const json& sample = j[i];
            if (!sample.is_array())
                throw FormatError(path + ": sample " + std::to_string(i) +
                                  " must be an array of path records");
            std::vector<PathParams> paths;
            paths.reserve(sample.size());
            for (const json& rec : sample) {
                PathParams p;
                p.alpha = cplx(rec.at("alpha_re").get<double>(), rec.at("alpha_im").get<double>());
                p.tau = rec.at("tau_s").get<double>();
                p.theta = rec.at("theta_rad").get<double>();
                p.vartheta = rec.at("vartheta_rad").get<double>();
                p.nu = doppler_shift(sc.v, lambda, p.vartheta);
                if (!std::isfinite(p.alpha.real()) || !std::isfinite(p.alpha.imag()) ||
                    !std::isfinite(p.tau) || !std::isfinite(p.theta) || !std::isfinite(p.vartheta))
                    throw FormatError(path + ": sample " + std::to_string(i) +
                                      " holds a non-finite path value");
                paths.push_back(p);
            }
            out.push_back(std::move(paths));
        }
    } catch (const json::exception& e) {
        throw FormatError(path + ": path record field error: " + e.what());
    }
    return out;
}

// ---- CSV emitters -----------------------------------------------------------

inline std::string fmt_g(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << text;
    os.flush();
    if (!os) throw IoError("write failed: " + path);
}

inline void write_metrics_csv(const std::string& path, const RunMetrics& m, uint64_t seed) {
    std::string out = "# seed=" + std::to_string(seed) + " version=" + kVersion + "\n";
    out += "epoch,lr,train_loss,val_nmse_db\n";
    for (size_t e = 0; e < m.epochs_completed(); ++e)
        out += std::to_string(e) + "," + fmt_g(m.lr[e]) + "," + fmt_g(m.train_loss[e]) + "," +
               fmt_g(m.val_nmse_db[e]) + "\n";
    write_text_file(path, out);
}

inline void write_report_csv(const std::string& path, const EvalReport& rep, uint64_t seed) {
    std::string out = "# seed=" + std::to_string(seed) + " version=" + kVersion +
                      " excluded=" + std::to_string(rep.excluded) + "\n";
    out += "metric,nmse_db,nmse_linear\n";
    out += "overall," + fmt_g(rep.nmse_db) + "," + fmt_g(rep.nmse_linear) + "\n";
    for (size_t n = 0; n < rep.per_block_db.size(); ++n)
        out += "block_" + std::to_string(n) + "," + fmt_g(rep.per_block_db[n]) + "," +
               fmt_g(rep.per_block_linear[n]) + "\n";
    write_text_file(path, out);
}

struct SweepRow {
    double axis_value = 0.0;
    double nmse_db = 0.0;
    uint64_t seed = 0;
};

inline void write_curve_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::string out = std::string("# version=") + kVersion + "\n";
    out += "axis_value,nmse_db,seed\n";
    for (const SweepRow& r : rows)
        out += fmt_g(r.axis_value) + "," + fmt_g(r.nmse_db) + "," + std::to_string(r.seed) + "\n";
    write_text_file(path, out);
}

}  // namespace lodex
