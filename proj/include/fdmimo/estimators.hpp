// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdmimo/channel.hpp"
#include "fdmimo/dataset.hpp"
#include "fdmimo/gan.hpp"
#include "fdmimo/linalg.hpp"
#include "fdmimo/nn.hpp"

namespace fdmimo {

enum class DescentOptimizer { fixed_step, adam };

/// Inner-loop solver settings. epsilon is the relative objective-change
/// stopping tolerance; fixed_step applies lr to the objective normalized by
/// the observation energy so one default works across power levels.
/// `presamples` > 0 turns on candidate screening for the latent solver: that
/// many Gaussian latents are scored by the phase-warm-started objective
/// (forward passes only) and the restarts descend from the best scorers,
/// which is what makes the heavily multimodal array landscape tractable.
struct DescentConfig {
    DescentOptimizer optimizer = DescentOptimizer::adam;
    double lr = 1e-2;
    int max_iters = 2000;
    double epsilon = 0.01;
    int restarts = 5;
    int presamples = 256;
    std::uint64_t seed = 0;

    void validate() const {
        if (lr <= 0.0 || max_iters < 1 || epsilon <= 0.0 || restarts < 1 || presamples < 0)
            throw std::invalid_argument("DescentConfig: lr/max_iters/epsilon/restarts out of range");
    }
};

struct EstimateReport {
    Vec alpha;
    Vec tau;
    Vec theta;
    Vec phi_up;
    Vec phi_dl;
    std::vector<CVec> channels;          // estimated channel per entry of channel_subcarriers
    std::vector<int> channel_subcarriers;
    Vec objective_trace;                 // of the chosen restart, including the initial value
    int iterations = 0;
    double seconds = 0.0;
    int restart_index = -1;
    bool unidentifiable = false;
    std::string warning;
};

inline std::vector<CVec> reconstruct_uplink(const Vec& alpha, const Vec& tau, const Vec& theta,
                                            const Vec& phi_up, const SystemConfig& cfg) {
    PathParams x;
    x.alpha = alpha;
    x.tau = tau;
    x.theta = theta;
    x.phi_up = phi_up;
    x.phi_dl = Vec(alpha.size(), 0.0);
    std::vector<CVec> h(static_cast<std::size_t>(cfg.subcarrier_count));
    for (int k = 1; k <= cfg.subcarrier_count; ++k)
        h[static_cast<std::size_t>(k - 1)] = uplink_channel(x, cfg, k);
    return h;
}

/// Full-array downlink reconstruction; the antenna subset only matters for
/// training, the recovered parameters describe the channel on every element.
inline std::vector<CVec> reconstruct_downlink(const Vec& alpha, const Vec& tau, const Vec& theta,
                                              const Vec& phi_dl, const SystemConfig& cfg) {
    PathParams x;
    x.alpha = alpha;
    x.tau = tau;
    x.theta = theta;
    x.phi_up = Vec(alpha.size(), 0.0);
    x.phi_dl = phi_dl;
    const auto antennas = cfg.all_antennas();
    std::vector<CVec> h(static_cast<std::size_t>(cfg.subcarrier_count));
    for (int k = 1; k <= cfg.subcarrier_count; ++k)
        h[static_cast<std::size_t>(k - 1)] = downlink_channel(x, cfg, k, antennas);
    return h;
}

namespace detail {

struct DescentOutcome {
    Vec params;
    Vec trace;
    bool finite = true;
};

/// Iterate p -> p - step * grad until the relative objective change stays
/// below epsilon for a few consecutive iterations (Adam's warmup makes a
/// single calm iteration an unreliable signal) or the budget runs out. An
/// exactly zero objective stops immediately. `scale` divides the fixed-step
/// update so lr refers to the normalized objective.
inline DescentOutcome run_descent(Vec params,
                                  const std::function<ObjectiveEval(const Vec&)>& objective,
                                  const DescentConfig& dcfg, double scale) {
    constexpr int kPatience = 3;
    DescentOutcome out;
    AdamVecState adam;
    adam.lr = dcfg.lr;
    ObjectiveEval eval = objective(params);
    out.trace.push_back(eval.value);
    int calm = 0;
    // Anything this far below the observation energy is an exact fit up to
    // float noise; stepping away from it (Adam moves by ~lr even on
    // microscopic gradients) would only oscillate.
    const double zero_floor = 1e-24 * scale;
    for (int it = 0; it < dcfg.max_iters; ++it) {
        if (!std::isfinite(eval.value)) {
            out.finite = false;
            break;
        }
        if (eval.value <= zero_floor)
            break;
        if (dcfg.optimizer == DescentOptimizer::fixed_step) {
            const double step = dcfg.lr / std::max(scale, 1e-300);
            for (std::size_t i = 0; i < params.size(); ++i)
                params[i] -= step * eval.grad[i];
        } else {
            adam_step(params, eval.grad, adam);
        }
        eval = objective(params);
        out.trace.push_back(eval.value);
        const double prev = out.trace[out.trace.size() - 2];
        if (std::isfinite(eval.value) &&
            std::abs(prev - eval.value) <= dcfg.epsilon * std::max(prev, 1e-300)) {
            if (++calm >= kPatience || eval.value <= zero_floor)
                break;
        } else {
            calm = 0;
        }
    }
    out.finite = out.finite && std::isfinite(out.trace.back()) && all_finite(params);
    out.params = std::move(params);
    return out;
}

} // namespace detail

/// Normal equations of the phase-linear uplink model: with the observation
/// written as y = U g + n, g = [e^{j phi_1} ... e^{j phi_L}], returns
/// gram = U^H U, rhs = U^H y and the observation energy. The Gram entries
/// separate into a subcarrier sum times an antenna sum because the steering
/// phases do not depend on the subcarrier.
struct UplinkPhaseLinearization {
    CMat gram;
    CVec rhs;
    double y_energy = 0.0;

    /// Residual ||y - U g(phi)||^2 evaluated through the quadratic form.
    [[nodiscard]] double residual(const Vec& phi) const {
        const std::size_t n_path = rhs.size();
        CVec g(n_path);
        for (std::size_t l = 0; l < n_path; ++l)
            g[l] = std::polar(1.0, phi[l]);
        cplx quad{};
        cplx cross{};
        for (std::size_t l = 0; l < n_path; ++l) {
            cross += std::conj(g[l]) * rhs[l];
            for (std::size_t l2 = 0; l2 < n_path; ++l2)
                quad += std::conj(g[l]) * gram(l, l2) * g[l2];
        }
        return y_energy - 2.0 * cross.real() + quad.real();
    }
};

inline UplinkPhaseLinearization uplink_phase_linearization(const Vec& alpha, const Vec& tau,
                                                           const Vec& theta,
                                                           const UplinkObservation& obs,
                                                           const SystemConfig& cfg) {
    const std::size_t n_path = alpha.size();
    const std::size_t n_ant = static_cast<std::size_t>(cfg.antenna_count);
    const std::size_t n_sub = obs.subcarriers.size();

    std::vector<CVec> coef(n_sub, CVec(n_path)); // s_k alpha_l e^{j beta_k tau_l}
    for (std::size_t ki = 0; ki < n_sub; ++ki) {
        const double beta = kTwoPi * obs.subcarriers[ki] / cfg.subcarrier_count * cfg.bandwidth_hz;
        for (std::size_t l = 0; l < n_path; ++l)
            coef[ki][l] = obs.pilot_symbols[ki] * alpha[l] * std::polar(1.0, beta * tau[l]);
    }
    std::vector<CVec> steer(n_ant, CVec(n_path)); // e^{j gamma_m sin theta_l}
    const double spatial_scale = kTwoPi / cfg.uplink_wavelength_m() * cfg.antenna_spacing_m;
    for (std::size_t l = 0; l < n_path; ++l) {
        const double s = spatial_scale * std::sin(theta[l]);
        for (std::size_t m = 0; m < n_ant; ++m)
            steer[m][l] = std::polar(1.0, s * static_cast<double>(m));
    }

    UplinkPhaseLinearization lin;
    lin.gram = CMat(n_path, n_path);
    lin.rhs.assign(n_path, cplx{});
    lin.y_energy = norm2sq(obs.y);

    CMat coef_gram(n_path, n_path), steer_gram(n_path, n_path);
    for (std::size_t l = 0; l < n_path; ++l)
        for (std::size_t l2 = 0; l2 < n_path; ++l2) {
            cplx a{}, b{};
            for (std::size_t ki = 0; ki < n_sub; ++ki)
                a += std::conj(coef[ki][l]) * coef[ki][l2];
            for (std::size_t m = 0; m < n_ant; ++m)
                b += std::conj(steer[m][l]) * steer[m][l2];
            coef_gram(l, l2) = a;
            steer_gram(l, l2) = b;
            lin.gram(l, l2) = a * b;
        }
    for (std::size_t ki = 0; ki < n_sub; ++ki)
        for (std::size_t m = 0; m < n_ant; ++m) {
            const cplx yv = obs.y[ki * n_ant + m];
            for (std::size_t l = 0; l < n_path; ++l)
                lin.rhs[l] += std::conj(coef[ki][l] * steer[m][l]) * yv;
        }
    return lin;
}

/// Closed-form phase initializer: for a fixed frequency-independent triple
/// the uplink observation is linear in [e^{j phi_1} ... e^{j phi_L}], so the
/// phase of the unconstrained linear fit is a strong starting point.
inline Vec uplink_phase_warm_start(const UplinkPhaseLinearization& lin) {
    const CVec g = lstsq(lin.gram, lin.rhs);
    Vec phi(g.size());
    for (std::size_t l = 0; l < g.size(); ++l)
        phi[l] = (g[l] == cplx{}) ? 0.0 : std::arg(g[l]);
    return phi;
}

inline Vec uplink_phase_warm_start(const Vec& alpha, const Vec& tau, const Vec& theta,
                                   const UplinkObservation& obs, const SystemConfig& cfg) {
    return uplink_phase_warm_start(uplink_phase_linearization(alpha, tau, theta, obs, cfg));
}

/// Latent-space least squares for the uplink: minimizes the pilot residual
/// over (z, phi) where the frequency-independent triple is the de-normalized
/// generator output G(z). Gradients with respect to z chain the channel
/// gradient through the inverse feature map and the generator's input
/// gradient. Best of `restarts` initializations: z standard normal, phases
/// warm-started by the linear fit for that z's triple; restarts that go
/// non-finite are discarded.
inline EstimateReport up_gan_estimate(const UplinkObservation& obs, const GanModel& model,
                                      const SystemConfig& cfg, const DescentConfig& dcfg) {
    dcfg.validate();
    cfg.validate();
    if (!model.scaler_valid)
        throw std::invalid_argument("up_gan_estimate: model carries no feature scaler");
    const int n_path = cfg.path_count;
    if (model.generator.output_dim() != 3 * n_path)
        throw std::invalid_argument("up_gan_estimate: generator output must be 3 * path count");
    const int d = model.generator.input_dim();
    const double y_energy = norm2sq(obs.y);

    auto objective = [&](const Vec& p) {
        ObjectiveEval out;
        Mat z(static_cast<std::size_t>(d), 1);
        for (int i = 0; i < d; ++i)
            z(static_cast<std::size_t>(i), 0) = p[static_cast<std::size_t>(i)];
        const Vec phi(p.begin() + d, p.end());

        ForwardCache cache;
        const Mat feat = forward(model.generator, z, RunMode::eval, nullptr, &cache);
        Vec fvec(feat.rows());
        for (std::size_t i = 0; i < feat.rows(); ++i)
            fvec[i] = feat(i, 0);
        const ParamTriple triple = from_features(fvec, model.scaler);

        const ObjectiveEval chan = uplink_objective(triple.alpha, triple.tau, triple.theta, phi, obs, cfg);
        out.value = chan.value;

        const Vec jac = feature_jacobian_diag(triple, model.scaler);
        Mat gfeat(feat.rows(), 1);
        for (std::size_t i = 0; i < feat.rows(); ++i)
            gfeat(i, 0) = chan.grad[i] * jac[i];
        const Mat gz = backward(model.generator, cache, gfeat, nullptr);

        out.grad.resize(p.size());
        for (int i = 0; i < d; ++i)
            out.grad[static_cast<std::size_t>(i)] = gz(static_cast<std::size_t>(i), 0);
        for (int l = 0; l < n_path; ++l)
            out.grad[static_cast<std::size_t>(d + l)] = chan.grad[static_cast<std::size_t>(3 * n_path + l)];
        return out;
    };

    const auto t0 = std::chrono::steady_clock::now();

    // Restart starting points. With presampling, draw many latents, score
    // each by the objective at its warm-started phases and keep the best;
    // otherwise alternate warm-started and uniform phases on fresh latents.
    std::vector<Vec> starts;
    starts.reserve(static_cast<std::size_t>(dcfg.restarts));
    if (dcfg.presamples > 0) {
        Rng rng = Rng(dcfg.seed).child("presample");
        const int n_cand = std::max(dcfg.presamples, dcfg.restarts);
        std::vector<std::pair<double, Vec>> scored;
        scored.reserve(static_cast<std::size_t>(n_cand));
        for (int i = 0; i < n_cand; ++i) {
            Vec z(static_cast<std::size_t>(d));
            for (double& v : z)
                v = rng.normal();
            const Vec feat = forward_vec(model.generator, z);
            const ParamTriple t = from_features(feat, model.scaler);
            const UplinkPhaseLinearization lin =
                uplink_phase_linearization(t.alpha, t.tau, t.theta, obs, cfg);
            Vec p = z;
            const Vec phi = uplink_phase_warm_start(lin);
            p.insert(p.end(), phi.begin(), phi.end());
            scored.emplace_back(lin.residual(phi), std::move(p));
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (int r = 0; r < dcfg.restarts && r < n_cand; ++r)
            starts.push_back(std::move(scored[static_cast<std::size_t>(r)].second));
    } else {
        for (int r = 0; r < dcfg.restarts; ++r) {
            Rng rng = Rng(dcfg.seed).child("init", static_cast<std::uint64_t>(r));
            Vec p(static_cast<std::size_t>(d + n_path));
            for (int i = 0; i < d; ++i)
                p[static_cast<std::size_t>(i)] = rng.normal();
            if (r % 2 == 0) {
                const Vec feat0 = forward_vec(model.generator, Vec(p.begin(), p.begin() + d));
                const ParamTriple t0 = from_features(feat0, model.scaler);
                const Vec phi0 = uplink_phase_warm_start(t0.alpha, t0.tau, t0.theta, obs, cfg);
                for (int l = 0; l < n_path; ++l)
                    p[static_cast<std::size_t>(d + l)] = phi0[static_cast<std::size_t>(l)];
            } else {
                for (int l = 0; l < n_path; ++l)
                    p[static_cast<std::size_t>(d + l)] = rng.uniform(0.0, kTwoPi);
            }
            starts.push_back(std::move(p));
        }
    }

    detail::DescentOutcome best;
    int best_restart = -1;
    int discarded = 0;
    for (std::size_t r = 0; r < starts.size(); ++r) {
        detail::DescentOutcome outcome = detail::run_descent(starts[r], objective, dcfg, y_energy);
        if (!outcome.finite) {
            ++discarded;
            continue;
        }
        if (best_restart < 0 || outcome.trace.back() < best.trace.back()) {
            best = std::move(outcome);
            best_restart = static_cast<int>(r);
        }
    }
    if (best_restart < 0)
        throw std::runtime_error("up_gan_estimate: every restart diverged");

    // Polish the winner with two decayed-step stages; Adam oscillates at a
    // scale proportional to its step, so the raw stop can sit well above the
    // basin floor.
    if (dcfg.optimizer == DescentOptimizer::adam) {
        for (double decay : {0.1, 0.01}) {
            DescentConfig fine = dcfg;
            fine.lr = dcfg.lr * decay;
            detail::DescentOutcome polished = detail::run_descent(best.params, objective, fine, y_energy);
            if (polished.finite && polished.trace.back() <= best.trace.back()) {
                best.params = std::move(polished.params);
                best.trace.insert(best.trace.end(), polished.trace.begin() + 1, polished.trace.end());
            }
        }
    }

    EstimateReport report;
    Vec fvec = forward_vec(model.generator, Vec(best.params.begin(), best.params.begin() + d));
    const ParamTriple triple = from_features(fvec, model.scaler);
    report.alpha = triple.alpha;
    report.tau = triple.tau;
    report.theta = triple.theta;
    report.phi_up = wrap_angles(Vec(best.params.begin() + d, best.params.end()));
    report.channels = reconstruct_uplink(report.alpha, report.tau, report.theta, report.phi_up, cfg);
    report.channel_subcarriers = index_range(1, cfg.subcarrier_count);
    report.objective_trace = std::move(best.trace);
    report.iterations = static_cast<int>(report.objective_trace.size()) - 1;
    report.restart_index = best_restart;
    if (discarded > 0)
        report.warning = std::to_string(discarded) + " restart(s) discarded as non-finite";
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

/// Phase-only downlink least squares given the frequency-independent triple.
/// Identifiability needs |M_dl| >= L and p|K_dl| >= L; reports that fail the
/// check (or a rank-deficient measurement matrix) are flagged and carry a
/// warning, but the descent still runs. Restart 0 starts from `phi_init`
/// when given, otherwise from the phase of the unconstrained linear fit;
/// remaining restarts draw phases uniformly.
inline EstimateReport dl_phase_estimate(const DownlinkObservation& obs, const Vec& alpha,
                                        const Vec& tau, const Vec& theta, const SystemConfig& cfg,
                                        const DescentConfig& dcfg,
                                        const std::optional<Vec>& phi_init = {}) {
    dcfg.validate();
    cfg.validate();
    const int n_path = static_cast<int>(alpha.size());
    if (n_path == 0 || tau.size() != alpha.size() || theta.size() != alpha.size())
        throw std::invalid_argument("dl_phase_estimate: parameter vectors must share a positive length");
    if (phi_init && static_cast<int>(phi_init->size()) != n_path)
        throw std::invalid_argument("dl_phase_estimate: phi_init length mismatch");

    const auto t0 = std::chrono::steady_clock::now();
    const CMat b = build_B(alpha, tau, theta, cfg, obs.pilot_matrices);
    const int mat_rank = rank(b, 1e-9);

    EstimateReport report;
    const std::size_t m_dl = cfg.downlink_antennas.size();
    const std::size_t measurements = static_cast<std::size_t>(cfg.downlink_slots) * obs.subcarriers.size();
    if (m_dl < static_cast<std::size_t>(n_path)) {
        report.unidentifiable = true;
        report.warning = "unidentifiable: downlink antenna set smaller than the path count";
    } else if (measurements < static_cast<std::size_t>(n_path)) {
        report.unidentifiable = true;
        report.warning = "unidentifiable: fewer pilot measurements than paths";
    } else if (mat_rank < n_path) {
        report.unidentifiable = true;
        report.warning = "unidentifiable: measurement matrix is rank deficient";
    }

    const double y_energy = norm2sq(obs.y);
    auto objective = [&](const Vec& phi) { return dl_phase_objective(phi, b, obs.y); };

    detail::DescentOutcome best;
    int best_restart = -1;
    for (int r = 0; r < dcfg.restarts; ++r) {
        Vec phi0(static_cast<std::size_t>(n_path));
        if (r == 0 && phi_init) {
            phi0 = *phi_init;
        } else if (r == 0 && mat_rank == n_path) {
            // Warm start: phase of the unconstrained linear solution.
            const CVec g = lstsq(b, obs.y);
            for (int l = 0; l < n_path; ++l)
                phi0[static_cast<std::size_t>(l)] = std::arg(g[static_cast<std::size_t>(l)]);
        } else {
            Rng rng = Rng(dcfg.seed).child("phase-init", static_cast<std::uint64_t>(r));
            for (double& v : phi0)
                v = rng.uniform(0.0, kTwoPi);
        }
        detail::DescentOutcome outcome = detail::run_descent(phi0, objective, dcfg, y_energy);
        if (!outcome.finite)
            continue;
        if (best_restart < 0 || outcome.trace.back() < best.trace.back()) {
            best = std::move(outcome);
            best_restart = r;
        }
    }
    if (best_restart < 0)
        throw std::runtime_error("dl_phase_estimate: every restart diverged");

    report.alpha = alpha;
    report.tau = tau;
    report.theta = theta;
    report.phi_dl = wrap_angles(best.params);
    report.channels = reconstruct_downlink(alpha, tau, theta, report.phi_dl, cfg);
    report.channel_subcarriers = index_range(1, cfg.subcarrier_count);
    report.objective_trace = std::move(best.trace);
    report.iterations = static_cast<int>(report.objective_trace.size()) - 1;
    report.restart_index = best_restart;
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

/// Per-subcarrier sample covariance of the uplink channel over (a subset of)
/// the train split, with diagonal shrinkage 1e-3 * trace/M.
inline std::vector<CMat> channel_covariance(const Dataset& ds, const SystemConfig& cfg,
                                            int max_users = 2000) {
    if (ds.train_indices.empty())
        throw std::invalid_argument("channel_covariance: empty train split");
    const std::size_t n_users = std::min<std::size_t>(ds.train_indices.size(),
                                                      static_cast<std::size_t>(max_users));
    const std::size_t m = static_cast<std::size_t>(cfg.antenna_count);
    std::vector<CMat> cov(cfg.uplink_subcarriers.size(), CMat(m, m));
    for (std::size_t u = 0; u < n_users; ++u) {
        const PathParams& x = ds.records[static_cast<std::size_t>(ds.train_indices[u])];
        for (std::size_t ki = 0; ki < cfg.uplink_subcarriers.size(); ++ki) {
            const CVec h = uplink_channel(x, cfg, cfg.uplink_subcarriers[ki]);
            CMat& r = cov[ki];
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < m; ++j)
                    r(i, j) += h[i] * std::conj(h[j]);
        }
    }
    for (CMat& r : cov) {
        double trace = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            trace += r(i, i).real();
        const double shrink = 1e-3 * trace / (static_cast<double>(m) * static_cast<double>(n_users));
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                r(i, j) /= static_cast<double>(n_users);
                if (i == j)
                    r(i, j) += shrink;
            }
    }
    return cov;
}

/// Bayesian linear MMSE per subcarrier: h_hat = R conj(s) (|s|^2 R + sigma^2 I)^{-1} y.
inline EstimateReport up_lmmse(const UplinkObservation& obs, const std::vector<CMat>& covariances,
                               const SystemConfig& cfg) {
    cfg.validate();
    if (covariances.size() != obs.subcarriers.size())
        throw std::invalid_argument("up_lmmse: one covariance per training subcarrier");
    const std::size_t m = static_cast<std::size_t>(cfg.antenna_count);
    const auto t0 = std::chrono::steady_clock::now();

    EstimateReport report;
    report.channel_subcarriers = obs.subcarriers;
    report.channels.resize(obs.subcarriers.size());
    for (std::size_t ki = 0; ki < obs.subcarriers.size(); ++ki) {
        const CMat& r = covariances[ki];
        if (r.rows() != m || r.cols() != m)
            throw std::invalid_argument("up_lmmse: covariance shape mismatch");
        const cplx s = obs.pilot_symbols[ki];
        const double ps = std::norm(s);
        CMat a(m, m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                a(i, j) = ps * r(i, j) + ((i == j) ? cplx{cfg.noise_var, 0.0} : cplx{});
        CVec yk(obs.y.begin() + static_cast<std::ptrdiff_t>(ki * m),
                obs.y.begin() + static_cast<std::ptrdiff_t>((ki + 1) * m));
        const CVec w = lstsq(a, yk);
        CVec h(m);
        for (std::size_t i = 0; i < m; ++i) {
            cplx acc{};
            for (std::size_t j = 0; j < m; ++j)
                acc += r(i, j) * w[j];
            h[i] = acc * std::conj(s);
        }
        report.channels[ki] = std::move(h);
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

/// Downlink least squares over complex path weights rho_l = a_l e^{j phi_l}:
/// solves y ~ B(1, tau, theta) rho, then splits magnitude and phase. The
/// downlink gains are re-estimated rather than copied from the uplink.
inline EstimateReport dl_ls(const DownlinkObservation& obs, const Vec& tau, const Vec& theta,
                            const SystemConfig& cfg) {
    cfg.validate();
    const int n_path = static_cast<int>(tau.size());
    if (n_path == 0 || theta.size() != tau.size())
        throw std::invalid_argument("dl_ls: parameter vectors must share a positive length");
    const auto t0 = std::chrono::steady_clock::now();

    const Vec unit_gains(static_cast<std::size_t>(n_path), 1.0);
    const CMat b = build_B(unit_gains, tau, theta, cfg, obs.pilot_matrices);
    EstimateReport report;
    if (rank(b, 1e-9) < n_path) {
        report.unidentifiable = true;
        report.warning = "rank-deficient weight matrix; solution is min-norm";
    }
    const CVec rho = lstsq(b, obs.y);
    report.tau = tau;
    report.theta = theta;
    report.alpha.resize(rho.size());
    report.phi_dl.resize(rho.size());
    for (std::size_t l = 0; l < rho.size(); ++l) {
        report.alpha[l] = std::abs(rho[l]);
        report.phi_dl[l] = wrap_angle(std::arg(rho[l]));
    }
    report.channels = reconstruct_downlink(report.alpha, tau, theta, report.phi_dl, cfg);
    report.channel_subcarriers = index_range(1, cfg.subcarrier_count);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

/// Per-block settings for the coordinate-descent baseline. Learning rates
/// apply to the energy-normalized objective; initial points draw gains and
/// delays uniformly below the caps and angles/phases uniformly on the circle.
struct R2f2Options {
    double lr_gain = 0.05;
    double lr_delay = 0.02;
    double lr_angle = 0.02;
    double lr_phase = 0.1;
    double gain_max = 1.5;
    double delay_max = 100e-9;
    int max_cycles = 150;
};

/// Direct constrained least squares on the uplink parameters by block
/// coordinate descent over (gains, delays, angles, phases) with projection
/// onto the box constraints; each block move backtracks until the objective
/// does not increase, so cycles are monotone. Best of `restarts` random
/// initial points, then the downlink phases are re-estimated from the
/// downlink pilots.
inline EstimateReport modified_r2f2(const UplinkObservation& obs_up, const DownlinkObservation& obs_dl,
                                    const SystemConfig& cfg, const DescentConfig& dcfg,
                                    const R2f2Options& opts = {}) {
    dcfg.validate();
    cfg.validate();
    const int n_path = cfg.path_count;
    const std::size_t np = static_cast<std::size_t>(n_path);
    const double y_energy = norm2sq(obs_up.y);
    const auto t0 = std::chrono::steady_clock::now();

    auto objective = [&](const Vec& p) {
        const Vec alpha(p.begin(), p.begin() + n_path);
        const Vec tau(p.begin() + n_path, p.begin() + 2 * n_path);
        const Vec theta(p.begin() + 2 * n_path, p.begin() + 3 * n_path);
        const Vec phi(p.begin() + 3 * n_path, p.end());
        return uplink_objective(alpha, tau, theta, phi, obs_up, cfg);
    };
    auto project = [&](Vec& p) {
        for (std::size_t l = 0; l < np; ++l) {
            p[l] = std::max(p[l], 0.0);                       // gains >= 0
            p[np + l] = std::max(p[np + l], 0.0);             // delays >= 0
            p[2 * np + l] = std::clamp(p[2 * np + l], 0.0, kTwoPi);
            p[3 * np + l] = std::clamp(p[3 * np + l], 0.0, kTwoPi);
        }
    };

    const double block_lr[4] = {opts.lr_gain, opts.lr_delay, opts.lr_angle, opts.lr_phase};
    Vec best_p;
    Vec best_trace;
    int best_restart = -1;
    int total_cycles = 0;

    for (int r = 0; r < dcfg.restarts; ++r) {
        Rng rng = Rng(dcfg.seed).child("r2f2-init", static_cast<std::uint64_t>(r));
        Vec p(4 * np);
        for (std::size_t l = 0; l < np; ++l) {
            p[l] = rng.uniform(0.0, opts.gain_max);
            p[np + l] = rng.uniform(0.0, opts.delay_max);
            p[2 * np + l] = rng.uniform(0.0, kTwoPi);
            p[3 * np + l] = rng.uniform(0.0, kTwoPi);
        }
        double j_cur = objective(p).value;
        Vec trace{j_cur};
        for (int cycle = 0; cycle < opts.max_cycles; ++cycle) {
            for (int blk = 0; blk < 4; ++blk) {
                const ObjectiveEval eval = objective(p);
                double step = block_lr[blk] / std::max(y_energy, 1e-300);
                // Backtrack until the block move does not increase the objective.
                for (int halvings = 0; halvings < 40; ++halvings) {
                    Vec cand = p;
                    for (std::size_t l = 0; l < np; ++l)
                        cand[static_cast<std::size_t>(blk) * np + l] -=
                            step * eval.grad[static_cast<std::size_t>(blk) * np + l];
                    project(cand);
                    const double j_cand = objective(cand).value;
                    if (j_cand <= eval.value) {
                        p = std::move(cand);
                        break;
                    }
                    step *= 0.5;
                }
            }
            const double j_next = objective(p).value;
            trace.push_back(j_next);
            ++total_cycles;
            if (std::abs(j_cur - j_next) <= dcfg.epsilon * std::max(j_cur, 1e-300))
                break;
            j_cur = j_next;
        }
        if (!std::isfinite(trace.back()))
            continue;
        if (best_restart < 0 || trace.back() < best_trace.back()) {
            best_p = p;
            best_trace = trace;
            best_restart = r;
        }
    }
    if (best_restart < 0)
        throw std::runtime_error("modified_r2f2: every restart diverged");

    // Delay-sort the recovered paths, then re-estimate the downlink phases.
    Vec alpha(best_p.begin(), best_p.begin() + n_path);
    Vec tau(best_p.begin() + n_path, best_p.begin() + 2 * n_path);
    Vec theta(best_p.begin() + 2 * n_path, best_p.begin() + 3 * n_path);
    Vec phi(best_p.begin() + 3 * n_path, best_p.end());
    std::vector<std::size_t> order(np);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return tau[a] < tau[b]; });
    EstimateReport report;
    report.alpha.resize(np);
    report.tau.resize(np);
    report.theta.resize(np);
    report.phi_up.resize(np);
    for (std::size_t i = 0; i < np; ++i) {
        report.alpha[i] = alpha[order[i]];
        report.tau[i] = tau[order[i]];
        report.theta[i] = theta[order[i]];
        report.phi_up[i] = wrap_angle(phi[order[i]]);
    }

    DescentConfig phase_cfg = dcfg;
    phase_cfg.seed = Rng(dcfg.seed).child("r2f2-phase").seed();
    EstimateReport dl = dl_phase_estimate(obs_dl, report.alpha, report.tau, report.theta, cfg, phase_cfg);
    report.phi_dl = dl.phi_dl;
    report.channels = dl.channels;
    report.channel_subcarriers = dl.channel_subcarriers;
    report.unidentifiable = dl.unidentifiable;
    report.warning = dl.warning;
    report.objective_trace = std::move(best_trace);
    report.iterations = total_cycles;
    report.restart_index = best_restart;
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

enum class ReciprocityMode { copy_phase, delay_phase };

/// Downlink reconstruction without downlink training: the phases are either
/// copied from the uplink estimate or derived from the carrier-delay product
/// 2 pi f_dl tau.
inline EstimateReport full_reciprocity(const EstimateReport& uplink_estimate, ReciprocityMode mode,
                                       const SystemConfig& cfg) {
    cfg.validate();
    if (uplink_estimate.alpha.empty() || uplink_estimate.phi_up.empty())
        throw std::invalid_argument("full_reciprocity: uplink estimate lacks parameters");
    EstimateReport report;
    report.alpha = uplink_estimate.alpha;
    report.tau = uplink_estimate.tau;
    report.theta = uplink_estimate.theta;
    report.phi_up = uplink_estimate.phi_up;
    report.phi_dl.resize(report.alpha.size());
    for (std::size_t l = 0; l < report.alpha.size(); ++l) {
        report.phi_dl[l] = (mode == ReciprocityMode::copy_phase)
                               ? uplink_estimate.phi_up[l]
                               : wrap_angle(kTwoPi * cfg.downlink_freq_hz * uplink_estimate.tau[l]);
    }
    report.channels = reconstruct_downlink(report.alpha, report.tau, report.theta, report.phi_dl, cfg);
    report.channel_subcarriers = index_range(1, cfg.subcarrier_count);
    return report;
}

} // namespace fdmimo
