// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdmimo/channel.hpp"
#include "fdmimo/linalg.hpp"
#include "fdmimo/rng.hpp"

namespace fdmimo {

/// Synthetic clustered-multipath scenario. Every user sits at a 2-D position
/// inside one of `cluster_count` clusters; per cluster, each path's angle,
/// delay and shadowing respond smoothly to that position, with gains decaying
/// exponentially in delay. The parameter records therefore concentrate near a
/// low-dimensional, multi-modal manifold - what both ray-traced channels and
/// a small-latent generative prior presume - while small per-path jitter
/// keeps the distribution full rank.
struct ScenarioSpec {
    int path_count = 5;
    int user_count = 20000;
    double bandwidth_hz = 20e6;
    double delay_spread_max_s = 94.5e-9;
    int cluster_count = 3;
    double cluster_angle_spread_rad = 0.12;
    double cluster_delay_spread_s = 3e-9;
    double gain_decay_s = 30e-9;
    double gain_shadow_db = 3.0;
    double alpha_dl_rel_err = 0.008;
    std::uint64_t seed = 1;

    void validate() const {
        if (path_count < 1 || user_count < 1 || cluster_count < 1)
            throw std::invalid_argument("ScenarioSpec: counts must be positive");
        if (bandwidth_hz <= 0.0 || delay_spread_max_s <= 0.0 || gain_decay_s <= 0.0)
            throw std::invalid_argument("ScenarioSpec: bandwidth/delay/gain scales must be positive");
        if (cluster_angle_spread_rad < 0.0 || cluster_delay_spread_s < 0.0 || gain_shadow_db < 0.0 ||
            alpha_dl_rel_err < 0.0)
            throw std::invalid_argument("ScenarioSpec: spreads must be nonnegative");
    }
};

/// Affine per-block feature maps between raw parameters and the [-1, 1]
/// training range. Blocks: log10 gains, delays in sample-time units, angles,
/// phases. The phase block is fixed to [0, 2pi] and never feeds the
/// generative model; it is kept so the scaler describes the full record.
struct FeatureScaler {
    struct Block {
        double lo = -1.0;
        double hi = 1.0;
    };
    Block gain_log10;
    Block delay_norm;
    Block angle;
    Block phase{0.0, kTwoPi};
    double sample_time_s = 5e-8;

    static double forward_value(const Block& b, double v) { return 2.0 * (v - b.lo) / (b.hi - b.lo) - 1.0; }
    static double inverse_value(const Block& b, double f) { return b.lo + (f + 1.0) * 0.5 * (b.hi - b.lo); }
    static double inverse_slope(const Block& b) { return 0.5 * (b.hi - b.lo); }
};

inline FeatureScaler fit_scaler(const std::vector<PathParams>& records, const std::vector<int>& idx,
                                double sample_time_s) {
    if (idx.empty())
        throw std::invalid_argument("fit_scaler: empty index set");
    FeatureScaler s;
    s.sample_time_s = sample_time_s;
    double glo = 1e300, ghi = -1e300, dlo = 1e300, dhi = -1e300, alo = 1e300, ahi = -1e300;
    for (int i : idx) {
        const PathParams& x = records.at(static_cast<std::size_t>(i));
        for (int l = 0; l < x.paths(); ++l) {
            if (x.alpha[l] <= 0.0)
                throw std::invalid_argument("fit_scaler: gains must be positive for the log map");
            glo = std::min(glo, std::log10(x.alpha[l]));
            ghi = std::max(ghi, std::log10(x.alpha[l]));
            dlo = std::min(dlo, x.tau[l] / sample_time_s);
            dhi = std::max(dhi, x.tau[l] / sample_time_s);
            alo = std::min(alo, x.theta[l]);
            ahi = std::max(ahi, x.theta[l]);
        }
    }
    auto widen = [](double lo, double hi) {
        return FeatureScaler::Block{lo, (hi - lo < 1e-12) ? lo + 1.0 : hi};
    };
    s.gain_log10 = widen(glo, ghi);
    s.delay_norm = widen(dlo, dhi);
    s.angle = widen(alo, ahi);
    return s;
}

/// Frequency-independent feature vector [log10 gains | delays/T_s | angles],
/// each block mapped into [-1, 1]. Length 3L; phases never enter.
inline Vec to_features(const PathParams& x, const FeatureScaler& s) {
    const int n_path = x.paths();
    Vec f(3 * static_cast<std::size_t>(n_path));
    for (int l = 0; l < n_path; ++l) {
        if (x.alpha[l] <= 0.0)
            throw std::invalid_argument("to_features: gains must be positive");
        f[l] = FeatureScaler::forward_value(s.gain_log10, std::log10(x.alpha[l]));
        f[n_path + l] = FeatureScaler::forward_value(s.delay_norm, x.tau[l] / s.sample_time_s);
        f[2 * n_path + l] = FeatureScaler::forward_value(s.angle, x.theta[l]);
    }
    return f;
}

struct ParamTriple {
    Vec alpha;
    Vec tau;
    Vec theta;
};

inline ParamTriple from_features(std::span<const double> f, const FeatureScaler& s) {
    if (f.size() % 3 != 0 || f.empty())
        throw std::invalid_argument("from_features: length must be a positive multiple of 3");
    const std::size_t n_path = f.size() / 3;
    ParamTriple t;
    t.alpha.resize(n_path);
    t.tau.resize(n_path);
    t.theta.resize(n_path);
    for (std::size_t l = 0; l < n_path; ++l) {
        t.alpha[l] = std::pow(10.0, FeatureScaler::inverse_value(s.gain_log10, f[l]));
        t.tau[l] = FeatureScaler::inverse_value(s.delay_norm, f[n_path + l]) * s.sample_time_s;
        t.theta[l] = FeatureScaler::inverse_value(s.angle, f[2 * n_path + l]);
    }
    return t;
}

/// Diagonal Jacobian d(parameter)/d(feature) at the de-normalized point,
/// used to chain channel gradients through the inverse feature map.
inline Vec feature_jacobian_diag(const ParamTriple& t, const FeatureScaler& s) {
    const std::size_t n_path = t.alpha.size();
    Vec j(3 * n_path);
    const double ln10 = std::log(10.0);
    for (std::size_t l = 0; l < n_path; ++l) {
        j[l] = t.alpha[l] * ln10 * FeatureScaler::inverse_slope(s.gain_log10);
        j[n_path + l] = s.sample_time_s * FeatureScaler::inverse_slope(s.delay_norm);
        j[2 * n_path + l] = FeatureScaler::inverse_slope(s.angle);
    }
    return j;
}

/// Downlink gains derived from the stored uplink gains: alpha_dl =
/// alpha * (1 + eps) with eps zero-mean Gaussian scaled so E|eps| equals
/// rel_err. Gains are clamped away from zero to stay feasible.
inline Vec downlink_gains(const Vec& alpha, double rel_err, Rng& rng) {
    Vec out = alpha;
    if (rel_err == 0.0)
        return out;
    const double sigma = rel_err * std::sqrt(kPi / 2.0);
    for (double& a : out)
        a = std::max(a * (1.0 + sigma * rng.normal()), 1e-12);
    return out;
}

struct Dataset {
    ScenarioSpec spec;
    std::vector<PathParams> records;
    std::vector<int> train_indices;
    std::vector<int> test_indices;
    FeatureScaler scaler;
};

namespace detail {

inline void split_indices(std::size_t n, double train_fraction, Rng& rng,
                          std::vector<int>& train, std::vector<int>& test) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = n; i > 1; --i)
        std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)))]);
    const std::size_t n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
    train.assign(idx.begin(), idx.begin() + n_train);
    test.assign(idx.begin() + n_train, idx.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
}

inline void sort_paths_by_delay(PathParams& x) {
    const int n_path = x.paths();
    std::vector<int> order(n_path);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return x.tau[a] < x.tau[b]; });
    PathParams sorted = x;
    for (int i = 0; i < n_path; ++i) {
        sorted.alpha[i] = x.alpha[order[i]];
        sorted.tau[i] = x.tau[order[i]];
        sorted.theta[i] = x.theta[order[i]];
        sorted.phi_up[i] = x.phi_up[order[i]];
        sorted.phi_dl[i] = x.phi_dl[order[i]];
    }
    x = std::move(sorted);
}

} // namespace detail

inline Dataset generate(const ScenarioSpec& spec) {
    spec.validate();
    Dataset ds;
    ds.spec = spec;
    Rng rng = Rng(spec.seed).child("scenario");

    // Fixed per-scenario geometry: for every cluster and path, a base
    // (angle, delay, shadow) plus the linear response of angle and delay to
    // the 2-D user position inside the cluster.
    struct PathGeometry {
        double theta0, tau0, shadow_db;
        double angle_u1, angle_u2;
        double delay_u1, delay_u2;
    };
    std::vector<std::vector<PathGeometry>> geometry(
        static_cast<std::size_t>(spec.cluster_count),
        std::vector<PathGeometry>(static_cast<std::size_t>(spec.path_count)));
    for (auto& cluster : geometry) {
        for (int l = 0; l < spec.path_count; ++l) {
            PathGeometry& g = cluster[static_cast<std::size_t>(l)];
            g.theta0 = rng.uniform(0.0, kTwoPi);
            // Stratified base delays with unit-norm position responses keep
            // the per-cluster delay ordering stable across positions; delay
            // crossings would fold the sorted-parameter manifold.
            g.tau0 = (0.08 + 0.75 * (l + 0.5) / spec.path_count + rng.uniform(-0.03, 0.03)) *
                     spec.delay_spread_max_s;
            g.shadow_db = spec.gain_shadow_db * rng.normal();
            const double angle_dir = rng.uniform(0.0, kTwoPi);
            g.angle_u1 = std::cos(angle_dir);
            g.angle_u2 = std::sin(angle_dir);
            const double delay_dir = rng.uniform(0.0, kTwoPi);
            g.delay_u1 = std::cos(delay_dir);
            g.delay_u2 = std::sin(delay_dir);
        }
    }
    // Per-path jitter at a small fraction of the position-driven spreads
    // keeps the records near (not on) the manifold.
    const double angle_jitter = 0.05 * spec.cluster_angle_spread_rad;
    const double delay_jitter = 0.05 * spec.cluster_delay_spread_s;
    const double shadow_jitter_db = 0.1 * spec.gain_shadow_db;

    ds.records.reserve(static_cast<std::size_t>(spec.user_count));
    for (int u = 0; u < spec.user_count; ++u) {
        PathParams x;
        x.alpha.resize(spec.path_count);
        x.tau.resize(spec.path_count);
        x.theta.resize(spec.path_count);
        x.phi_up.resize(spec.path_count);
        x.phi_dl.resize(spec.path_count);
        const int c = rng.uniform_int(spec.cluster_count);
        const double u1 = rng.uniform(-1.0, 1.0);
        const double u2 = rng.uniform(-1.0, 1.0);
        for (int l = 0; l < spec.path_count; ++l) {
            const PathGeometry& g = geometry[static_cast<std::size_t>(c)][static_cast<std::size_t>(l)];
            x.theta[l] = wrap_angle(g.theta0 +
                                    spec.cluster_angle_spread_rad * (g.angle_u1 * u1 + g.angle_u2 * u2) +
                                    angle_jitter * rng.normal());
            x.tau[l] = std::clamp(g.tau0 +
                                      spec.cluster_delay_spread_s * (g.delay_u1 * u1 + g.delay_u2 * u2) +
                                      delay_jitter * rng.normal(),
                                  0.0, spec.delay_spread_max_s);
            const double shadow = g.shadow_db + shadow_jitter_db * rng.normal();
            x.alpha[l] = std::exp(-x.tau[l] / spec.gain_decay_s) * std::pow(10.0, shadow / 20.0);
            x.phi_up[l] = rng.uniform(0.0, kTwoPi);
            x.phi_dl[l] = rng.uniform(0.0, kTwoPi);
        }
        detail::sort_paths_by_delay(x);
        x.validate();
        ds.records.push_back(std::move(x));
    }

    Rng split_rng = Rng(spec.seed).child("split");
    detail::split_indices(ds.records.size(), 0.8, split_rng, ds.train_indices, ds.test_indices);
    ds.scaler = fit_scaler(ds.records, ds.train_indices, 1.0 / spec.bandwidth_hz);
    return ds;
}

namespace detail {

inline nlohmann::json scaler_to_json(const FeatureScaler& s) {
    auto block = [](const FeatureScaler::Block& b) { return nlohmann::json{{"lo", b.lo}, {"hi", b.hi}}; };
    return {{"gain_log10", block(s.gain_log10)},
            {"delay_norm", block(s.delay_norm)},
            {"angle", block(s.angle)},
            {"phase", block(s.phase)},
            {"sample_time_s", s.sample_time_s}};
}

inline FeatureScaler scaler_from_json(const nlohmann::json& j) {
    auto block = [&](const char* key) {
        return FeatureScaler::Block{j.at(key).at("lo").get<double>(), j.at(key).at("hi").get<double>()};
    };
    FeatureScaler s;
    s.gain_log10 = block("gain_log10");
    s.delay_norm = block("delay_norm");
    s.angle = block("angle");
    s.phase = block("phase");
    s.sample_time_s = j.at("sample_time_s").get<double>();
    return s;
}

inline nlohmann::json spec_to_json(const ScenarioSpec& s) {
    return {{"path_count", s.path_count},
            {"user_count", s.user_count},
            {"bandwidth_hz", s.bandwidth_hz},
            {"delay_spread_max_s", s.delay_spread_max_s},
            {"cluster_count", s.cluster_count},
            {"cluster_angle_spread_rad", s.cluster_angle_spread_rad},
            {"cluster_delay_spread_s", s.cluster_delay_spread_s},
            {"gain_decay_s", s.gain_decay_s},
            {"gain_shadow_db", s.gain_shadow_db},
            {"alpha_dl_rel_err", s.alpha_dl_rel_err},
            {"seed", s.seed}};
}

inline ScenarioSpec spec_from_json(const nlohmann::json& j) {
    ScenarioSpec s;
    s.path_count = j.at("path_count").get<int>();
    s.user_count = j.at("user_count").get<int>();
    s.bandwidth_hz = j.at("bandwidth_hz").get<double>();
    s.delay_spread_max_s = j.at("delay_spread_max_s").get<double>();
    s.cluster_count = j.at("cluster_count").get<int>();
    s.cluster_angle_spread_rad = j.at("cluster_angle_spread_rad").get<double>();
    s.cluster_delay_spread_s = j.at("cluster_delay_spread_s").get<double>();
    s.gain_decay_s = j.at("gain_decay_s").get<double>();
    s.gain_shadow_db = j.at("gain_shadow_db").get<double>();
    s.alpha_dl_rel_err = j.at("alpha_dl_rel_err").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

inline Vec json_vec(const nlohmann::json& j, const char* key, std::size_t line) {
    if (!j.contains(key))
        throw std::runtime_error("line " + std::to_string(line) + ": missing field '" + key + "'");
    Vec v;
    for (const auto& e : j.at(key))
        v.push_back(e.get<double>());
    return v;
}

} // namespace detail

/// One JSON record per line; scaler, split and provenance go to a sidecar
/// "<path>.meta.json".
inline void save(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("save: cannot open " + path);
    for (const PathParams& x : ds.records) {
        nlohmann::json j{{"alpha", x.alpha},
                         {"tau", x.tau},
                         {"theta", x.theta},
                         {"phi_up", x.phi_up},
                         {"phi_dl", x.phi_dl}};
        out << j.dump() << '\n';
    }
    nlohmann::json meta{{"version", 1},
                        {"spec", detail::spec_to_json(ds.spec)},
                        {"scaler", detail::scaler_to_json(ds.scaler)},
                        {"split", {{"train", ds.train_indices}, {"test", ds.test_indices}}}};
    std::ofstream mout(path + ".meta.json");
    if (!mout)
        throw std::runtime_error("save: cannot open " + path + ".meta.json");
    mout << meta.dump(2) << '\n';
}

inline Dataset load(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("load: cannot open " + path);
    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        PathParams x;
        x.alpha = detail::json_vec(j, "alpha", line_no);
        x.tau = detail::json_vec(j, "tau", line_no);
        x.theta = detail::json_vec(j, "theta", line_no);
        x.phi_up = detail::json_vec(j, "phi_up", line_no);
        x.phi_dl = detail::json_vec(j, "phi_dl", line_no);
        try {
            x.validate();
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        ds.records.push_back(std::move(x));
    }

    std::ifstream min(path + ".meta.json");
    if (!min)
        throw std::runtime_error("load: missing sidecar " + path + ".meta.json");
    nlohmann::json meta = nlohmann::json::parse(min);
    ds.spec = detail::spec_from_json(meta.at("spec"));
    ds.scaler = detail::scaler_from_json(meta.at("scaler"));
    ds.train_indices = meta.at("split").at("train").get<std::vector<int>>();
    ds.test_indices = meta.at("split").at("test").get<std::vector<int>>();
    return ds;
}

/// Import an externally produced parameter table. Expected CSV header:
/// alpha_1..alpha_L, tau_1..tau_L, theta_1..theta_L, phi_up_1..phi_up_L,
/// phi_dl_1..phi_dl_L (any column order). Paths are re-sorted by delay.
inline Dataset import_csv(const std::string& path, double bandwidth_hz, std::uint64_t seed,
                          double train_fraction = 0.8) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("import_csv: cannot open " + path);
    std::string header;
    if (!std::getline(in, header))
        throw std::runtime_error("import_csv: empty file " + path);

    std::vector<std::string> names;
    {
        std::stringstream ss(header);
        std::string tok;
        while (std::getline(ss, tok, ','))
            names.push_back(tok);
    }
    const std::vector<std::string> blocks = {"alpha", "tau", "theta", "phi_up", "phi_dl"};
    int n_path = 0;
    for (const auto& n : names)
        if (n.rfind("alpha_", 0) == 0)
            n_path = std::max(n_path, std::stoi(n.substr(6)));
    if (n_path == 0)
        throw std::runtime_error("import_csv: no alpha_* columns in header");
    std::vector<std::vector<int>> col_of(blocks.size(), std::vector<int>(n_path, -1));
    for (std::size_t c = 0; c < names.size(); ++c) {
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const std::string prefix = blocks[b] + "_";
            if (names[c].rfind(prefix, 0) == 0) {
                const int l = std::stoi(names[c].substr(prefix.size()));
                if (l >= 1 && l <= n_path)
                    col_of[b][l - 1] = static_cast<int>(c);
            }
        }
    }
    for (std::size_t b = 0; b < blocks.size(); ++b)
        for (int l = 0; l < n_path; ++l)
            if (col_of[b][l] < 0)
                throw std::runtime_error("import_csv: missing column " + blocks[b] + "_" +
                                         std::to_string(l + 1));

    Dataset ds;
    ds.spec.path_count = n_path;
    ds.spec.bandwidth_hz = bandwidth_hz;
    ds.spec.seed = seed;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        std::vector<double> cells;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                cells.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                         ": bad number '" + tok + "'");
            }
        }
        if (cells.size() != names.size())
            throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                     ": expected " + std::to_string(names.size()) + " cells");
        PathParams x;
        x.alpha.resize(n_path);
        x.tau.resize(n_path);
        x.theta.resize(n_path);
        x.phi_up.resize(n_path);
        x.phi_dl.resize(n_path);
        for (int l = 0; l < n_path; ++l) {
            x.alpha[l] = cells[static_cast<std::size_t>(col_of[0][l])];
            x.tau[l] = cells[static_cast<std::size_t>(col_of[1][l])];
            x.theta[l] = cells[static_cast<std::size_t>(col_of[2][l])];
            x.phi_up[l] = cells[static_cast<std::size_t>(col_of[3][l])];
            x.phi_dl[l] = cells[static_cast<std::size_t>(col_of[4][l])];
        }
        detail::sort_paths_by_delay(x);
        try {
            x.validate();
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        ds.records.push_back(std::move(x));
    }
    if (ds.records.empty())
        throw std::runtime_error("import_csv: no records in " + path);
    ds.spec.user_count = static_cast<int>(ds.records.size());

    Rng split_rng = Rng(seed).child("split");
    detail::split_indices(ds.records.size(), train_fraction, split_rng, ds.train_indices,
                          ds.test_indices);
    ds.scaler = fit_scaler(ds.records, ds.train_indices, 1.0 / bandwidth_hz);
    return ds;
}

} // namespace fdmimo
