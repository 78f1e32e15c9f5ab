// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fdmimo/estimators.hpp"
#include "fdmimo/metrics.hpp"

namespace fdmimo {

enum class Scenario { up_lmmse, up_gan, dl_gan, dl_fr_copy, dl_fr_delay, dl_ls, dl_r2f2 };

inline std::string scenario_name(Scenario s) {
    switch (s) {
    case Scenario::up_lmmse: return "up_lmmse";
    case Scenario::up_gan: return "up_gan";
    case Scenario::dl_gan: return "dl_gan";
    case Scenario::dl_fr_copy: return "dl_fr_copy";
    case Scenario::dl_fr_delay: return "dl_fr_delay";
    case Scenario::dl_ls: return "dl_ls";
    case Scenario::dl_r2f2: return "dl_r2f2";
    }
    return "unknown";
}

inline Scenario parse_scenario(const std::string& name) {
    for (Scenario s : {Scenario::up_lmmse, Scenario::up_gan, Scenario::dl_gan, Scenario::dl_fr_copy,
                       Scenario::dl_fr_delay, Scenario::dl_ls, Scenario::dl_r2f2})
        if (scenario_name(s) == name)
            return s;
    throw std::invalid_argument("unknown scenario: " + name);
}

inline bool scenario_needs_gan(Scenario s) {
    switch (s) {
    case Scenario::up_gan:
    case Scenario::dl_gan:
    case Scenario::dl_fr_copy:
    case Scenario::dl_fr_delay:
    case Scenario::dl_ls:
        return true;
    default:
        return false;
    }
}

inline bool scenario_is_downlink(Scenario s) {
    return s != Scenario::up_lmmse && s != Scenario::up_gan;
}

/// Monte-Carlo experiment grid: one axis, a scenario list, trials per point.
/// SNR is defined as P_T E||h||^2 / (M sigma^2), with E||h||^2 estimated from
/// the train split; the axis value sets P_T for axis "snr_db" and snr_db
/// pins the operating point for the other axes. `timing` fills the seconds
/// column with wall time at the cost of byte-identical reruns.
struct SweepSpec {
    std::string axis = "snr_db";
    Vec values = {-10, -5, 0, 5, 10, 15, 20, 25, 30};
    std::vector<Scenario> scenarios = {Scenario::up_gan, Scenario::dl_gan};
    int trials = 100;
    int ser_trials = 200;
    double snr_db = 20.0;
    double sigma_phi_deg = 0.0;
    std::uint64_t master_seed = 1;
    std::string output_path;
    bool timing = false;

    void validate() const {
        if (axis != "snr_db" && axis != "p" && axis != "m_dl_size" && axis != "sigma_phi_deg")
            throw std::invalid_argument("SweepSpec: unknown axis " + axis);
        if (values.empty() || scenarios.empty())
            throw std::invalid_argument("SweepSpec: values and scenarios must be nonempty");
        if (trials < 1 || ser_trials < 1)
            throw std::invalid_argument("SweepSpec: trials must be >= 1");
    }
};

struct MetricRow {
    std::string scenario;
    std::string axis;
    double value = 0.0;
    double nmse_db = 0.0;
    double rate = 0.0;
    double ser = 0.0;
    double iters = 0.0;
    double seconds = 0.0;
    int trials = 0;
};

inline std::string rows_to_csv(const std::vector<MetricRow>& rows) {
    std::string out = "scenario,axis,value,nmse_db,rate,ser,iters,seconds,trials\n";
    char buf[256];
    for (const MetricRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.10g,%.6f,%.6f,%.8f,%.2f,%.6f,%d\n",
                      r.scenario.c_str(), r.axis.c_str(), r.value, r.nmse_db, r.rate, r.ser, r.iters,
                      r.seconds, r.trials);
        out += buf;
    }
    return out;
}

inline void write_rows_csv(const std::vector<MetricRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("write_rows_csv: cannot open " + path);
    out << rows_to_csv(rows);
}

namespace detail {

/// `count` evenly spread 1-based indices out of 1..total, always unique.
inline std::vector<int> spread_indices(int count, int total) {
    if (count < 1 || count > total)
        throw std::invalid_argument("spread_indices: count out of range");
    std::vector<int> out(static_cast<std::size_t>(count));
    if (count == 1) {
        out[0] = 1;
        return out;
    }
    int prev = 0;
    for (int i = 0; i < count; ++i) {
        int idx = 1 + static_cast<int>(std::llround(static_cast<double>(total - 1) * i / (count - 1)));
        idx = std::max(idx, prev + 1);
        idx = std::min(idx, total - (count - 1 - i));
        out[static_cast<std::size_t>(i)] = idx;
        prev = idx;
    }
    return out;
}

inline int worker_count() {
    if (const char* env = std::getenv("FDMIMO_WORKERS")) {
        const int n = std::atoi(env);
        if (n >= 1)
            return n;
    }
    return 1;
}

/// Static split of [0, n) across worker threads; results keyed by index so
/// the reduction order never depends on scheduling.
template <typename Fn>
inline void parallel_for(int n, int workers, Fn&& fn) {
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::size_t next = 0;
    const int used = std::min(workers, n);
    pool.reserve(static_cast<std::size_t>(used));
    for (int w = 0; w < used; ++w) {
        const int lo = static_cast<int>(next);
        const int hi = lo + (n - lo) / (used - w);
        next = static_cast<std::size_t>(hi);
        pool.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i)
                fn(i);
        });
    }
    for (auto& t : pool)
        t.join();
}

struct TrialMetrics {
    double nmse_lin = 0.0;
    double rate = 0.0;
    double ser = 0.0;
    double iters = 0.0;
    double seconds = 0.0;
};

} // namespace detail

/// One estimator invocation for one scenario on one observation pair. The
/// GAN-prior scenarios consume `up_rep` (the uplink latent-space estimate);
/// up_lmmse consumes `cov`. Seeds for the inner solvers derive from labeled
/// children of `trial_rng`.
inline EstimateReport run_scenario(Scenario scenario, const UplinkObservation& obs_up,
                                   const DownlinkObservation& obs_dl, const std::vector<CMat>* cov,
                                   const GanModel* model, const SystemConfig& cfg,
                                   const DescentConfig& dcfg, const EstimateReport* up_rep,
                                   const Rng& trial_rng) {
    switch (scenario) {
    case Scenario::up_lmmse:
        if (cov == nullptr)
            throw std::invalid_argument("run_scenario: up_lmmse needs channel covariances");
        return up_lmmse(obs_up, *cov, cfg);
    case Scenario::up_gan: {
        if (model == nullptr)
            throw std::invalid_argument("run_scenario: up_gan needs a model");
        DescentConfig up_cfg = dcfg;
        up_cfg.seed = trial_rng.child("upgan").seed();
        return up_gan_estimate(obs_up, *model, cfg, up_cfg);
    }
    case Scenario::dl_gan: {
        if (up_rep == nullptr)
            throw std::invalid_argument("run_scenario: dl_gan needs the uplink estimate");
        DescentConfig phase_cfg = dcfg;
        phase_cfg.seed = trial_rng.child("dl-phase").seed();
        return dl_phase_estimate(obs_dl, up_rep->alpha, up_rep->tau, up_rep->theta, cfg, phase_cfg);
    }
    case Scenario::dl_fr_copy:
    case Scenario::dl_fr_delay:
        if (up_rep == nullptr)
            throw std::invalid_argument("run_scenario: full reciprocity needs the uplink estimate");
        return full_reciprocity(*up_rep,
                                scenario == Scenario::dl_fr_copy ? ReciprocityMode::copy_phase
                                                                 : ReciprocityMode::delay_phase,
                                cfg);
    case Scenario::dl_ls:
        if (up_rep == nullptr)
            throw std::invalid_argument("run_scenario: dl_ls needs the uplink estimate");
        return dl_ls(obs_dl, up_rep->tau, up_rep->theta, cfg);
    case Scenario::dl_r2f2: {
        DescentConfig r2_cfg = dcfg;
        r2_cfg.restarts = std::max(dcfg.restarts, 10);
        r2_cfg.seed = trial_rng.child("r2f2").seed();
        return modified_r2f2(obs_up, obs_dl, cfg, r2_cfg);
    }
    }
    throw std::invalid_argument("run_scenario: unhandled scenario");
}

/// Mean squared uplink channel norm over (a sample of) the train split and
/// all subcarriers; the reference the SNR definition divides by.
inline double mean_channel_energy(const Dataset& ds, const SystemConfig& cfg, int max_users = 500) {
    if (ds.train_indices.empty())
        throw std::invalid_argument("mean_channel_energy: empty train split");
    const std::size_t n_users =
        std::min<std::size_t>(ds.train_indices.size(), static_cast<std::size_t>(max_users));
    double acc = 0.0;
    long count = 0;
    for (std::size_t u = 0; u < n_users; ++u) {
        const PathParams& x = ds.records[static_cast<std::size_t>(ds.train_indices[u])];
        for (int k = 1; k <= cfg.subcarrier_count; ++k) {
            acc += norm2sq(uplink_channel(x, cfg, k));
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

/// Runs the grid: every axis value x scenario x trial draws a test user,
/// synthesizes observations, runs the estimator chain and reduces metrics in
/// trial order. Deterministic per master seed: each trial consumes labeled
/// child streams, so worker count and axis position do not alter draws.
inline std::vector<MetricRow> run_sweep(const SweepSpec& spec, const SystemConfig& base,
                                        const Dataset& ds, const GanModel* model,
                                        const DescentConfig& dcfg) {
    spec.validate();
    base.validate();
    dcfg.validate();
    if (ds.test_indices.empty())
        throw std::invalid_argument("run_sweep: dataset has no test split");
    bool needs_gan = false;
    for (Scenario s : spec.scenarios)
        needs_gan = needs_gan || scenario_needs_gan(s);
    if (needs_gan && (model == nullptr || !model->scaler_valid))
        throw std::invalid_argument("run_sweep: scenario list requires a trained model with a scaler");

    const double mean_h2 = mean_channel_energy(ds, base);
    const auto pilot_power_for = [&](double snr_db) {
        return std::pow(10.0, snr_db / 10.0) * base.antenna_count * base.noise_var / mean_h2;
    };

    bool wants_lmmse = false;
    for (Scenario s : spec.scenarios)
        wants_lmmse = wants_lmmse || s == Scenario::up_lmmse;
    std::vector<CMat> cov;
    if (wants_lmmse)
        cov = channel_covariance(ds, base);

    Rng master(spec.master_seed);
    const int workers = detail::worker_count();
    std::vector<MetricRow> rows;

    for (double value : spec.values) {
        SystemConfig cfg = base;
        double sigma_phi = spec.sigma_phi_deg;
        if (spec.axis == "snr_db") {
            cfg.pilot_power = pilot_power_for(value);
        } else {
            cfg.pilot_power = pilot_power_for(spec.snr_db);
            if (spec.axis == "p") {
                const int p = static_cast<int>(value);
                cfg.downlink_slots = p;
                cfg.downlink_subcarriers = detail::spread_indices(p, cfg.subcarrier_count);
            } else if (spec.axis == "m_dl_size") {
                cfg.downlink_antennas =
                    detail::spread_indices(static_cast<int>(value), cfg.antenna_count);
            } else { // sigma_phi_deg
                sigma_phi = value;
            }
        }
        cfg.validate();

        std::vector<std::vector<detail::TrialMetrics>> metrics(
            spec.scenarios.size(), std::vector<detail::TrialMetrics>(static_cast<std::size_t>(spec.trials)));

        detail::parallel_for(spec.trials, workers, [&](int trial) {
            Rng troot = master.child("trial", static_cast<std::uint64_t>(trial));
            Rng user_rng = troot.child("user");
            const int user = ds.test_indices[static_cast<std::size_t>(
                user_rng.uniform_int(static_cast<int>(ds.test_indices.size())))];
            const PathParams& x = ds.records[static_cast<std::size_t>(user)];
            PathParams x_dl = x;
            {
                Rng gain_rng = troot.child("dl-gain");
                x_dl.alpha = downlink_gains(x.alpha, ds.spec.alpha_dl_rel_err, gain_rng);
            }

            Rng up_noise = troot.child("up-noise");
            const UplinkObservation obs_up = synth_uplink(x, cfg, up_noise);
            Rng pilot_rng = troot.child("pilot");
            const auto pilots = make_downlink_pilots(cfg, pilot_rng);
            Rng dl_noise = troot.child("dl-noise");
            const DownlinkObservation obs_dl = synth_downlink(x_dl, cfg, pilots, dl_noise);

            std::vector<CVec> truth_up(static_cast<std::size_t>(cfg.subcarrier_count));
            for (int k = 1; k <= cfg.subcarrier_count; ++k)
                truth_up[static_cast<std::size_t>(k - 1)] = uplink_channel(x, cfg, k);
            const auto antennas = cfg.all_antennas();
            std::vector<CVec> truth_dl(static_cast<std::size_t>(cfg.subcarrier_count));
            for (int k = 1; k <= cfg.subcarrier_count; ++k)
                truth_dl[static_cast<std::size_t>(k - 1)] = downlink_channel(x_dl, cfg, k, antennas);

            EstimateReport up_rep;
            bool have_up = false;
            for (Scenario s : spec.scenarios) {
                if (scenario_needs_gan(s)) {
                    up_rep = run_scenario(Scenario::up_gan, obs_up, obs_dl, nullptr, model, cfg,
                                          dcfg, nullptr, troot);
                    have_up = true;
                    break;
                }
            }

            for (std::size_t si = 0; si < spec.scenarios.size(); ++si) {
                const Scenario scenario = spec.scenarios[si];
                const auto t0 = std::chrono::steady_clock::now();
                EstimateReport rep =
                    (scenario == Scenario::up_gan)
                        ? up_rep
                        : run_scenario(scenario, obs_up, obs_dl, &cov, model, cfg, dcfg,
                                       have_up ? &up_rep : nullptr, troot);

                // Downlink-trained phases travel over the feedback link; a
                // nonzero sigma corrupts them before reconstruction.
                const bool feeds_back = scenario == Scenario::dl_gan || scenario == Scenario::dl_ls ||
                                        scenario == Scenario::dl_r2f2;
                if (feeds_back && sigma_phi > 0.0) {
                    Rng fb = troot.child("feedback", static_cast<std::uint64_t>(si));
                    rep.phi_dl = inject_feedback_error(rep.phi_dl, sigma_phi, fb);
                    rep.channels = reconstruct_downlink(rep.alpha, rep.tau, rep.theta, rep.phi_dl, cfg);
                }

                const bool downlink = scenario_is_downlink(scenario);
                const std::vector<CVec>& truth_all = downlink ? truth_dl : truth_up;
                std::vector<CVec> truth;
                truth.reserve(rep.channel_subcarriers.size());
                for (int k : rep.channel_subcarriers)
                    truth.push_back(truth_all[static_cast<std::size_t>(k - 1)]);

                detail::TrialMetrics& out = metrics[si][static_cast<std::size_t>(trial)];
                out.nmse_lin = nmse(truth, rep.channels);
                out.rate = rate_bps_hz(truth, rep.channels, cfg.pilot_power, cfg.noise_var);
                Rng ser_rng = troot.child("ser", static_cast<std::uint64_t>(si));
                out.ser = ser_qpsk(truth, rep.channels, cfg.pilot_power, cfg.noise_var,
                                   spec.ser_trials, ser_rng);
                out.iters = rep.iterations;
                if (spec.timing)
                    out.seconds =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            }
            (void)have_up;
        });

        for (std::size_t si = 0; si < spec.scenarios.size(); ++si) {
            MetricRow row;
            row.scenario = scenario_name(spec.scenarios[si]);
            row.axis = spec.axis;
            row.value = value;
            row.trials = spec.trials;
            double nmse_acc = 0.0;
            for (const detail::TrialMetrics& m : metrics[si]) {
                nmse_acc += m.nmse_lin;
                row.rate += m.rate;
                row.ser += m.ser;
                row.iters += m.iters;
                row.seconds += m.seconds;
            }
            const double n = static_cast<double>(spec.trials);
            row.nmse_db = to_db(nmse_acc / n);
            row.rate /= n;
            row.ser /= n;
            row.iters /= n;
            row.seconds /= n;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

} // namespace fdmimo
