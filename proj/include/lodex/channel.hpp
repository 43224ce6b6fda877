#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "lodex/rng.hpp"
#include "lodex/tensor.hpp"

// Time-varying ULA channel synthesis: per-path gain/delay/angle/Doppler
// parameters drawn from configurable distributions (or imported), the
// resulting antenna-time channel matrix, and the noisy partial uplink
// observation seen through the hybrid front end after LS pilot division.

namespace lodex {

inline constexpr double kSpeedOfLight = 2.99792458e8;  // m/s
inline constexpr double kPi = 3.14159265358979323846;

using cplx = std::complex<double>;

// Row-major complex matrix.
struct CMat {
    int rows = 0, cols = 0;
    std::vector<cplx> a;

    CMat() = default;
    CMat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c) {}

    cplx& at(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    const cplx& at(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
};

struct ChannelScenario {
    int N = 64;                   // BS antennas
    double fc = 60e9;             // carrier frequency, Hz
    double d_over_lambda = 0.5;   // antenna spacing in wavelengths
    int Np = 6;                   // scattering paths
    double v = 70.0 / 3.6;        // user speed, m/s
    int Lc = 50;                  // channel uses per block
    double Ts = 0.05e-6;          // sampling period, s
    int Tu = 50;                  // uplink blocks
    int Td = 50;                  // downlink blocks

    double wavelength() const { return kSpeedOfLight / fc; }
    int total_blocks() const { return Tu + Td; }
    double block_duration() const { return Lc * Ts; }

    void validate() const {
        if (N < 1) throw ConfigError("channel.N must be >= 1");
        if (Np < 1) throw ConfigError("channel.Np must be >= 1");
        if (Tu < 2) throw ConfigError("channel.Tu must be >= 2");
        if (Td < 1) throw ConfigError("channel.Td must be >= 1");
        if (!(fc > 0)) throw ConfigError("channel.fc_hz must be positive");
        if (!(Ts > 0)) throw ConfigError("channel.Ts_s must be positive");
        if (Lc < 1) throw ConfigError("channel.Lc must be >= 1");
    }
};

struct PathParams {
    cplx alpha;        // complex gain
    double tau = 0;    // delay, s
    double theta = 0;  // AoA/AoD, rad
    double vartheta = 0;  // angle between motion and path, rad
    double nu = 0;     // Doppler shift, Hz
};

enum class AntennaScheme { uniform, random };

struct ObservationConfig {
    double r = 1.0;                    // spatial compression ratio M/N
    std::optional<double> snr_db;      // empty = noise-free
    AntennaScheme selection = AntennaScheme::uniform;
    uint64_t selection_seed = 0;       // used by the random scheme

    int antenna_count(int N) const {
        const int M = static_cast<int>(std::lround(r * N));
        return M;
    }

    void validate(int N) const {
        if (!(r > 0.0 && r <= 1.0)) throw ConfigError("observation.r must be in (0, 1]");
        const int M = antenna_count(N);
        if (M < 1) throw ConfigError("observation.r too small: M = round(r*N) < 1");
        if (M > N) throw ConfigError("observation.r yields M > N");
        if (snr_db && !std::isfinite(*snr_db)) throw ConfigError("observation.snr_db must be finite");
    }
};

// Per-path sampling distributions. Replaces the ray-traced source with a
// parametric draw; externally supplied path parameters can be imported
// through the JSON hook in the io module instead.
struct PathDistribution {
    enum class GainProfile { exponential, flat };
    GainProfile profile = GainProfile::exponential;
    double decay = 2.0;            // e-folding in path index for the exponential profile
    double tau_max = 200e-9;       // delays uniform in [0, tau_max]
    double theta_max_deg = 60.0;   // AoA uniform in [-theta_max, theta_max]
    double vartheta_max_deg = 20.0;  // motion-path angle range

    void validate() const {
        if (!(tau_max >= 0)) throw ConfigError("paths.tau_max_s must be >= 0");
        if (!(theta_max_deg >= 0)) throw ConfigError("paths.theta_max_deg must be >= 0");
        if (!(vartheta_max_deg >= 0)) throw ConfigError("paths.vartheta_max_deg must be >= 0");
        if (!(decay > 0)) throw ConfigError("paths.decay must be positive");
    }
};

struct ChannelSample {
    CMat H;                        // N x (Tu+Td) ground truth
    CMat H_obs;                    // M x Tu noisy LS-estimated partial uplink
    std::vector<int> antenna_set;  // sorted, fixed across uplink blocks
    std::optional<double> snr_db;
};

inline double deg2rad(double d) { return d * kPi / 180.0; }

// a(theta): element i = exp(j 2 pi (d/lambda) i sin theta)
inline std::vector<cplx> steering_vector(double theta, int N, double d_over_lambda) {
    std::vector<cplx> a(static_cast<size_t>(N));
    const double step = 2.0 * kPi * d_over_lambda * std::sin(theta);
    for (int i = 0; i < N; ++i) a[static_cast<size_t>(i)] = std::polar(1.0, step * i);
    return a;
}

inline double doppler_shift(double v, double lambda, double vartheta) {
    if (!(lambda > 0)) throw ContractError("doppler_shift: lambda must be positive");
    return v / lambda * std::cos(vartheta);
}

// Fractional cycle of x; exact in doubles for |x| < 2^52. exp(j 2 pi x) is
// 1-periodic, so folding before the 2 pi scaling keeps sin/cos arguments
// small enough that independent evaluation orders agree to ~1e-14 even when
// fc tau spans thousands of cycles.
inline double frac_cycle(double x) { return x - std::floor(x); }

// Column n = sum_p alpha_p exp(j 2 pi (nu_p n Lc Ts - fc tau_p)) a(theta_p)
inline CMat gen_channel(const std::vector<PathParams>& paths, const ChannelScenario& sc) {
    if (static_cast<int>(paths.size()) != sc.Np)
        throw ContractError("gen_channel: path count does not match scenario Np");
    const int T = sc.total_blocks();
    CMat H(sc.N, T);
    const double Tb = sc.block_duration();
    for (const PathParams& p : paths) {
        const std::vector<cplx> a = steering_vector(p.theta, sc.N, sc.d_over_lambda);
        const double delay_cyc = frac_cycle(sc.fc * p.tau);
        for (int n = 0; n < T; ++n) {
            const double cyc = frac_cycle(p.nu * n * Tb) - delay_cyc;
            const cplx phase = p.alpha * std::polar(1.0, 2.0 * kPi * cyc);
            for (int i = 0; i < sc.N; ++i) H.at(i, n) += phase * a[static_cast<size_t>(i)];
        }
    }
    return H;
}

// Np independent draws. Gains follow the configured power profile normalized
// so E||column||^2 = N; phases are uniform (the gains are circular Gaussian).
inline std::vector<PathParams> sample_paths(Rng& rng, const ChannelScenario& sc,
                                            const PathDistribution& dist) {
    dist.validate();
    std::vector<double> w(static_cast<size_t>(sc.Np));
    double wsum = 0.0;
    for (int p = 0; p < sc.Np; ++p) {
        w[static_cast<size_t>(p)] =
            dist.profile == PathDistribution::GainProfile::exponential ? std::exp(-p / dist.decay) : 1.0;
        wsum += w[static_cast<size_t>(p)];
    }

    const double lambda = sc.wavelength();
    std::vector<PathParams> paths(static_cast<size_t>(sc.Np));
    for (int p = 0; p < sc.Np; ++p) {
        PathParams& pp = paths[static_cast<size_t>(p)];
        const double power = w[static_cast<size_t>(p)] / wsum;
        const double s = std::sqrt(power / 2.0);
        pp.alpha = cplx(s * rng.normal(), s * rng.normal());
        pp.tau = rng.uniform(0.0, dist.tau_max);
        pp.theta = rng.uniform(-deg2rad(dist.theta_max_deg), deg2rad(dist.theta_max_deg));
        pp.vartheta = rng.uniform(-deg2rad(dist.vartheta_max_deg), deg2rad(dist.vartheta_max_deg));
        pp.nu = doppler_shift(sc.v, lambda, pp.vartheta);
    }
    return paths;
}

// uniform: floor(i*N/M); random: M distinct draws, sorted
inline std::vector<int> select_antennas(int N, int M, AntennaScheme scheme, uint64_t seed = 0) {
    if (M < 1 || M > N) throw ConfigError("select_antennas: need 1 <= M <= N");
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(M));
    if (scheme == AntennaScheme::uniform) {
        for (int i = 0; i < M; ++i)
            idx.push_back(static_cast<int>(static_cast<int64_t>(i) * N / M));
    } else {
        std::vector<int> all(static_cast<size_t>(N));
        for (int i = 0; i < N; ++i) all[static_cast<size_t>(i)] = i;
        Rng rng = Rng::substream(seed, {0x5e1ec7u});
        for (int i = 0; i < M; ++i) {
            const int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(N - i)));
            std::swap(all[static_cast<size_t>(i)], all[static_cast<size_t>(j)]);
        }
        idx.assign(all.begin(), all.begin() + M);
        std::sort(idx.begin(), idx.end());
    }
    return idx;
}

inline double snr_db_to_noise_var(double snr_db) {
    // SNR = P / sigma^2 with pilot power P = 1
    return 1.0 / std::pow(10.0, snr_db / 10.0);
}

// LS estimate per uplink block: rows antenna_set of H plus CN(0, sigma^2)
// noise divided by the unit pilot.
inline CMat observe_uplink(const CMat& H, const std::vector<int>& antenna_set,
                           std::optional<double> snr_db, int Tu, Rng& rng) {
    const int M = static_cast<int>(antenna_set.size());
    CMat obs(M, Tu);
    for (int m = 0; m < M; ++m)
        for (int n = 0; n < Tu; ++n) obs.at(m, n) = H.at(antenna_set[static_cast<size_t>(m)], n);
    if (snr_db) {
        const double sigma2 = snr_db_to_noise_var(*snr_db);
        const double s = std::sqrt(sigma2 / 2.0);
        for (int n = 0; n < Tu; ++n)
            for (int m = 0; m < M; ++m)
                obs.at(m, n) += cplx(s * rng.normal(), s * rng.normal());
    }
    return obs;
}

struct Dataset {
    ChannelScenario scenario;
    ObservationConfig observation;
    PathDistribution paths;
    std::vector<int> antenna_set;
    double norm_constant = 1.0;  // scale applied to every H and H_obs
    uint64_t seed = 0;
    size_t train_count = 0;
    std::vector<ChannelSample> samples;

    size_t val_count() const { return samples.size() - train_count; }
};

inline size_t train_split_count(size_t total, double train_fraction) {
    return static_cast<size_t>(std::floor(train_fraction * static_cast<double>(total)));
}

namespace detail {

// Shared dataset assembly: per-sample paths come either from the parametric
// sampler or from an imported list. Sample i draws from substream
// (seed, i), so generation order never matters. Afterwards one constant
// scales every matrix so the mean per-entry power of the training H is 1.
template <typename PathsFor>
Dataset assemble_dataset(const ChannelScenario& sc, const ObservationConfig& obs,
                         const PathDistribution& dist, size_t count, uint64_t seed,
                         double train_fraction, PathsFor&& paths_for) {
    sc.validate();
    obs.validate(sc.N);
    if (count < 10) throw ConfigError("build_dataset: count must be >= 10");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("build_dataset: train_fraction must be in (0, 1)");

    Dataset ds;
    ds.scenario = sc;
    ds.observation = obs;
    ds.paths = dist;
    ds.seed = seed;
    const int M = obs.antenna_count(sc.N);
    ds.antenna_set = select_antennas(sc.N, M, obs.selection, obs.selection_seed);
    ds.train_count = train_split_count(count, train_fraction);
    ds.samples.resize(count);

    for (size_t i = 0; i < count; ++i) {
        Rng rng = Rng::substream(seed, {0xda7a5e7u, i});
        ChannelSample& s = ds.samples[i];
        const std::vector<PathParams> paths = paths_for(i, rng);
        s.H = gen_channel(paths, sc);
        s.H_obs = observe_uplink(s.H, ds.antenna_set, obs.snr_db, sc.Tu, rng);
        s.antenna_set = ds.antenna_set;
        s.snr_db = obs.snr_db;
    }

    double power = 0.0;
    for (size_t i = 0; i < ds.train_count; ++i)
        for (const cplx& v : ds.samples[i].H.a) power += std::norm(v);
    power /= static_cast<double>(ds.train_count) * sc.N * sc.total_blocks();
    ds.norm_constant = 1.0 / std::sqrt(power);
    for (ChannelSample& s : ds.samples) {
        for (cplx& v : s.H.a) v *= ds.norm_constant;
        for (cplx& v : s.H_obs.a) v *= ds.norm_constant;
    }
    return ds;
}

}  // namespace detail

// count independent samples with fresh paths and noise per sample.
inline Dataset build_dataset(const ChannelScenario& sc, const ObservationConfig& obs,
                             const PathDistribution& dist, size_t count, uint64_t seed,
                             double train_fraction = 0.8) {
    return detail::assemble_dataset(sc, obs, dist, count, seed, train_fraction,
                                    [&](size_t, Rng& rng) { return sample_paths(rng, sc, dist); });
}

// Dataset from externally supplied per-sample path parameters (ray-traced or
// otherwise); only the observation noise is drawn here.
inline Dataset build_dataset_from_paths(const ChannelScenario& sc, const ObservationConfig& obs,
                                        const std::vector<std::vector<PathParams>>& per_sample,
                                        uint64_t seed, double train_fraction = 0.8) {
    for (size_t i = 0; i < per_sample.size(); ++i)
        if (static_cast<int>(per_sample[i].size()) != sc.Np)
            throw ConfigError("imported path list " + std::to_string(i) + " has " +
                              std::to_string(per_sample[i].size()) + " paths, scenario wants " +
                              std::to_string(sc.Np));
    return detail::assemble_dataset(
        sc, obs, PathDistribution{}, per_sample.size(), seed, train_fraction,
        [&](size_t i, Rng&) { return per_sample[i]; });
}

// complex <-> stacked-real conversions used at the network boundary:
// [Re(x); Im(x)] column layout.
inline std::vector<double> stack_column(const CMat& m, int col) {
    std::vector<double> out(static_cast<size_t>(2 * m.rows));
    for (int i = 0; i < m.rows; ++i) {
        out[static_cast<size_t>(i)] = m.at(i, col).real();
        out[static_cast<size_t>(i + m.rows)] = m.at(i, col).imag();
    }
    return out;
}

inline void unstack_column(const std::vector<double>& v, CMat& m, int col) {
    const int n = m.rows;
    for (int i = 0; i < n; ++i)
        m.at(i, col) = cplx(v[static_cast<size_t>(i)], v[static_cast<size_t>(i + n)]);
}

}  // namespace lodex
