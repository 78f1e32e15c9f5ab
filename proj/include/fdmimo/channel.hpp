// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdmimo/linalg.hpp"
#include "fdmimo/rng.hpp"

namespace fdmimo {

inline constexpr double kSpeedOfLight = 299792458.0;

inline std::vector<int> index_range(int lo, int hi) {
    std::vector<int> v;
    v.reserve(static_cast<std::size_t>(hi - lo + 1));
    for (int i = lo; i <= hi; ++i)
        v.push_back(i);
    return v;
}

/// Radio constants of the simulated FDD link. Subcarrier and antenna index
/// sets are 1-based and must be sorted. The defaults describe an indoor
/// 64-antenna ULA with 16 OFDM subcarriers over 20 MHz; the noise variance is
/// -174 dBm/Hz integrated over that bandwidth.
struct SystemConfig {
    int antenna_count = 64;
    int subcarrier_count = 16;
    double bandwidth_hz = 20e6;
    double uplink_freq_hz = 2.4e9;
    double downlink_freq_hz = 2.5e9;
    double antenna_spacing_m = 0.5 * kSpeedOfLight / 2.5e9;
    double pilot_power = 1.0;
    double noise_var = 7.962143e-14;
    std::vector<int> uplink_subcarriers = index_range(1, 16);
    std::vector<int> downlink_subcarriers = index_range(1, 16);
    std::vector<int> downlink_antennas = index_range(1, 64);
    int downlink_slots = 16;
    int path_count = 5;

    [[nodiscard]] double uplink_wavelength_m() const { return kSpeedOfLight / uplink_freq_hz; }
    [[nodiscard]] double downlink_wavelength_m() const { return kSpeedOfLight / downlink_freq_hz; }
    [[nodiscard]] double sample_time_s() const { return 1.0 / bandwidth_hz; }
    [[nodiscard]] std::vector<int> all_antennas() const { return index_range(1, antenna_count); }

    void validate() const {
        if (antenna_count < 1 || subcarrier_count < 1 || path_count < 1)
            throw std::invalid_argument("SystemConfig: counts must be positive");
        if (bandwidth_hz <= 0.0 || pilot_power <= 0.0 || noise_var < 0.0)
            throw std::invalid_argument("SystemConfig: bandwidth/power/noise out of range");
        if (uplink_freq_hz == downlink_freq_hz)
            throw std::invalid_argument("SystemConfig: uplink and downlink carriers must differ");
        if (downlink_slots < 1)
            throw std::invalid_argument("SystemConfig: downlink_slots must be >= 1");
        auto check_set = [](const std::vector<int>& s, int hi, const char* what) {
            if (s.empty())
                throw std::invalid_argument(std::string("SystemConfig: empty index set ") + what);
            if (!std::is_sorted(s.begin(), s.end()))
                throw std::invalid_argument(std::string("SystemConfig: index set not sorted: ") + what);
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (s[i] < 1 || s[i] > hi)
                    throw std::invalid_argument(std::string("SystemConfig: index out of range in ") + what);
                if (i > 0 && s[i] == s[i - 1])
                    throw std::invalid_argument(std::string("SystemConfig: duplicate index in ") + what);
            }
        };
        check_set(uplink_subcarriers, subcarrier_count, "uplink_subcarriers");
        check_set(downlink_subcarriers, subcarrier_count, "downlink_subcarriers");
        check_set(downlink_antennas, antenna_count, "downlink_antennas");
    }
};

/// Per-path propagation parameters of one user: gains (linear), delays
/// (seconds, sorted ascending), azimuth angles and the two frequency-specific
/// phase vectors, all of length path_count.
struct PathParams {
    Vec alpha;
    Vec tau;
    Vec theta;
    Vec phi_up;
    Vec phi_dl;

    [[nodiscard]] int paths() const { return static_cast<int>(alpha.size()); }

    void validate() const {
        const std::size_t l = alpha.size();
        if (l == 0 || tau.size() != l || theta.size() != l || phi_up.size() != l || phi_dl.size() != l)
            throw std::invalid_argument("PathParams: vectors must share a positive length");
        for (std::size_t i = 0; i < l; ++i) {
            if (alpha[i] < 0.0 || tau[i] < 0.0)
                throw std::invalid_argument("PathParams: gains and delays must be nonnegative");
            if (i > 0 && tau[i] < tau[i - 1])
                throw std::invalid_argument("PathParams: delays must be sorted ascending");
        }
    }
};

inline double wrap_angle(double a) {
    double w = std::fmod(a, kTwoPi);
    if (w < 0.0)
        w += kTwoPi;
    return w;
}

inline Vec wrap_angles(Vec v) {
    for (double& a : v)
        a = wrap_angle(a);
    return v;
}

/// ULA steering vector on a subset of antennas: entry for antenna index m
/// (1-based) is exp(j 2 pi / lambda * spacing * (m - 1) * sin(theta)).
inline CVec array_response(double theta, double wavelength, std::span<const int> antennas,
                           double spacing) {
    if (antennas.empty())
        throw std::invalid_argument("array_response: empty antenna set");
    const double k = kTwoPi / wavelength * spacing * std::sin(theta);
    CVec a(antennas.size());
    for (std::size_t i = 0; i < antennas.size(); ++i)
        a[i] = std::polar(1.0, k * (antennas[i] - 1));
    return a;
}

namespace detail {

// h_k = sum_l gain_l * exp(j(phase_l + 2 pi k / K * delay_l * B)) * steering(theta_l)
inline CVec multipath_channel(const Vec& alpha, const Vec& tau, const Vec& theta, const Vec& phi,
                              const SystemConfig& cfg, int k, double wavelength,
                              std::span<const int> antennas) {
    if (k < 1 || k > cfg.subcarrier_count)
        throw std::invalid_argument("channel: subcarrier index out of range");
    const double beta = kTwoPi * k / cfg.subcarrier_count * cfg.bandwidth_hz;
    CVec h(antennas.size(), cplx{});
    for (std::size_t l = 0; l < alpha.size(); ++l) {
        const cplx coef = alpha[l] * std::polar(1.0, phi[l] + beta * tau[l]);
        const double spatial = kTwoPi / wavelength * cfg.antenna_spacing_m * std::sin(theta[l]);
        for (std::size_t i = 0; i < antennas.size(); ++i)
            h[i] += coef * std::polar(1.0, spatial * (antennas[i] - 1));
    }
    return h;
}

} // namespace detail

inline CVec uplink_channel(const PathParams& x, const SystemConfig& cfg, int k) {
    const auto antennas = cfg.all_antennas();
    return detail::multipath_channel(x.alpha, x.tau, x.theta, x.phi_up, cfg, k,
                                     cfg.uplink_wavelength_m(), antennas);
}

inline CVec downlink_channel(const PathParams& x, const SystemConfig& cfg, int k,
                             std::span<const int> antennas) {
    return detail::multipath_channel(x.alpha, x.tau, x.theta, x.phi_dl, cfg, k,
                                     cfg.downlink_wavelength_m(), antennas);
}

/// Stacked noisy uplink pilot measurements: one length-M block per training
/// subcarrier, ordered by the sorted subcarrier set.
struct UplinkObservation {
    CVec y;
    CVec pilot_symbols;
    std::vector<int> subcarriers;
};

inline UplinkObservation synth_uplink(const PathParams& x, const SystemConfig& cfg, Rng& rng) {
    x.validate();
    cfg.validate();
    UplinkObservation obs;
    obs.subcarriers = cfg.uplink_subcarriers;
    obs.pilot_symbols.assign(obs.subcarriers.size(), cplx{std::sqrt(cfg.pilot_power), 0.0});
    obs.y.reserve(obs.subcarriers.size() * cfg.antenna_count);
    for (std::size_t ki = 0; ki < obs.subcarriers.size(); ++ki) {
        const CVec h = uplink_channel(x, cfg, obs.subcarriers[ki]);
        for (const cplx& hv : h)
            obs.y.push_back(hv * obs.pilot_symbols[ki] + rng.complex_normal(cfg.noise_var));
    }
    return obs;
}

/// Downlink training symbols: one p x |M_dl| matrix per training subcarrier,
/// unit-modulus QPSK entries scaled so every row has squared norm P_T.
inline std::vector<CMat> make_downlink_pilots(const SystemConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t n_ant = cfg.downlink_antennas.size();
    const double amp = std::sqrt(cfg.pilot_power / static_cast<double>(n_ant));
    std::vector<CMat> pilots;
    pilots.reserve(cfg.downlink_subcarriers.size());
    for (std::size_t ki = 0; ki < cfg.downlink_subcarriers.size(); ++ki) {
        CMat s(cfg.downlink_slots, n_ant);
        for (auto& v : s.data())
            v = amp * std::polar(1.0, kPi / 4.0 + kPi / 2.0 * rng.uniform_int(4));
        pilots.push_back(std::move(s));
    }
    return pilots;
}

/// Stacked downlink pilot measurements: one length-p block per training
/// subcarrier, each block S_k h_k + noise.
struct DownlinkObservation {
    CVec y;
    std::vector<CMat> pilot_matrices;
    std::vector<int> subcarriers;
    std::vector<int> antennas;
};

inline DownlinkObservation synth_downlink(const PathParams& x, const SystemConfig& cfg,
                                          const std::vector<CMat>& pilots, Rng& rng) {
    x.validate();
    cfg.validate();
    if (pilots.size() != cfg.downlink_subcarriers.size())
        throw std::invalid_argument("synth_downlink: one pilot matrix per training subcarrier");
    DownlinkObservation obs;
    obs.subcarriers = cfg.downlink_subcarriers;
    obs.antennas = cfg.downlink_antennas;
    obs.pilot_matrices = pilots;
    obs.y.reserve(obs.subcarriers.size() * cfg.downlink_slots);
    for (std::size_t ki = 0; ki < obs.subcarriers.size(); ++ki) {
        const CMat& s = pilots[ki];
        if (s.rows() != static_cast<std::size_t>(cfg.downlink_slots) ||
            s.cols() != cfg.downlink_antennas.size())
            throw std::invalid_argument("synth_downlink: pilot matrix shape mismatch");
        const CVec h = downlink_channel(x, cfg, obs.subcarriers[ki], cfg.downlink_antennas);
        CVec yk = matvec(s, h);
        for (cplx& v : yk)
            obs.y.push_back(v + rng.complex_normal(cfg.noise_var));
    }
    return obs;
}

/// Downlink measurement matrix for the phase-only problem: stacks
/// B_k = S_k [gamma_1^k b(theta_1) ... gamma_L^k b(theta_L)] over training
/// subcarriers, with gamma_l^k = alpha_l exp(j 2 pi k / K * tau_l B). The
/// stacked matrix applied to [exp(j phi_1) ... exp(j phi_L)]^T reproduces the
/// noiseless downlink observation.
inline CMat build_B(const Vec& alpha, const Vec& tau, const Vec& theta, const SystemConfig& cfg,
                    const std::vector<CMat>& pilots) {
    cfg.validate();
    const std::size_t n_path = alpha.size();
    if (tau.size() != n_path || theta.size() != n_path || n_path == 0)
        throw std::invalid_argument("build_B: parameter vectors must share a positive length");
    if (pilots.size() != cfg.downlink_subcarriers.size())
        throw std::invalid_argument("build_B: one pilot matrix per training subcarrier");
    const std::size_t p = static_cast<std::size_t>(cfg.downlink_slots);
    CMat b(p * pilots.size(), n_path);
    for (std::size_t ki = 0; ki < pilots.size(); ++ki) {
        const int k = cfg.downlink_subcarriers[ki];
        const double beta = kTwoPi * k / cfg.subcarrier_count * cfg.bandwidth_hz;
        // columns of S_k * [gamma_l b(theta_l)]
        for (std::size_t l = 0; l < n_path; ++l) {
            const cplx gamma = alpha[l] * std::polar(1.0, beta * tau[l]);
            const CVec bvec = array_response(theta[l], cfg.downlink_wavelength_m(),
                                             cfg.downlink_antennas, cfg.antenna_spacing_m);
            for (std::size_t i = 0; i < p; ++i) {
                cplx acc{};
                for (std::size_t j = 0; j < bvec.size(); ++j)
                    acc += pilots[ki](i, j) * bvec[j];
                b(ki * p + i, l) = gamma * acc;
            }
        }
    }
    return b;
}

struct ObjectiveEval {
    double value = 0.0;
    Vec grad;
};

/// Squared pilot residual J = ||y - A(alpha, tau, theta, phi)||^2 and its
/// real gradient with respect to the 4L parameters, laid out as
/// [alpha | tau | theta | phi]. The per-path channel derivatives are, with
/// omega_l = phi_l + beta tau_l + gamma_m sin(theta_l):
///   dh/dalpha_l = e^{j omega_l}
///   dh/dtau_l   = j beta alpha_l e^{j omega_l}
///   dh/dtheta_l = j gamma_m alpha_l cos(theta_l) e^{j omega_l}
///   dh/dphi_l   = j alpha_l e^{j omega_l}
/// and each term contributes -2 Re{conj(residual) * s_k * dh/dp}.
inline ObjectiveEval uplink_objective(const Vec& alpha, const Vec& tau, const Vec& theta,
                                      const Vec& phi, const UplinkObservation& obs,
                                      const SystemConfig& cfg) {
    const std::size_t n_path = alpha.size();
    if (tau.size() != n_path || theta.size() != n_path || phi.size() != n_path || n_path == 0)
        throw std::invalid_argument("uplink_objective: parameter vectors must share a positive length");
    const std::size_t n_ant = static_cast<std::size_t>(cfg.antenna_count);
    if (obs.y.size() != obs.subcarriers.size() * n_ant)
        throw std::invalid_argument("uplink_objective: observation shape mismatch");

    ObjectiveEval out;
    out.grad.assign(4 * n_path, 0.0);

    Vec sin_theta(n_path), cos_theta(n_path);
    for (std::size_t l = 0; l < n_path; ++l) {
        sin_theta[l] = std::sin(theta[l]);
        cos_theta[l] = std::cos(theta[l]);
    }
    const double spatial_scale = kTwoPi / cfg.uplink_wavelength_m() * cfg.antenna_spacing_m;

    // Phase factors split into a per-(k,l) part and a per-(m,l) part so the
    // inner loop is pure complex multiplies.
    std::vector<CVec> per_antenna(n_ant, CVec(n_path));
    for (std::size_t m = 0; m < n_ant; ++m) {
        const double gamma_m = spatial_scale * static_cast<double>(m);
        for (std::size_t l = 0; l < n_path; ++l)
            per_antenna[m][l] = std::polar(1.0, gamma_m * sin_theta[l]);
    }

    for (std::size_t ki = 0; ki < obs.subcarriers.size(); ++ki) {
        const int k = obs.subcarriers[ki];
        const double beta = kTwoPi * k / cfg.subcarrier_count * cfg.bandwidth_hz;
        const cplx s = obs.pilot_symbols[ki];
        CVec per_path(n_path);
        for (std::size_t l = 0; l < n_path; ++l)
            per_path[l] = std::polar(1.0, phi[l] + beta * tau[l]);
        for (std::size_t m = 0; m < n_ant; ++m) {
            const double gamma_m = spatial_scale * static_cast<double>(m);
            cplx h{};
            for (std::size_t l = 0; l < n_path; ++l)
                h += alpha[l] * per_path[l] * per_antenna[m][l];
            const cplx resid = obs.y[ki * n_ant + m] - h * s;
            out.value += std::norm(resid);
            const cplx c = std::conj(resid) * s;
            for (std::size_t l = 0; l < n_path; ++l) {
                const cplx ce = c * per_path[l] * per_antenna[m][l];
                const double re = ce.real();
                const double im = ce.imag();
                out.grad[l] += -2.0 * re;
                out.grad[n_path + l] += 2.0 * beta * alpha[l] * im;
                out.grad[2 * n_path + l] += 2.0 * gamma_m * alpha[l] * cos_theta[l] * im;
                out.grad[3 * n_path + l] += 2.0 * alpha[l] * im;
            }
        }
    }
    return out;
}

/// Phase-only downlink residual J = ||y - B g(phi)||^2 with g_l = e^{j phi_l};
/// dJ/dphi_l = 2 Im{<B(:,l), r>* ... } computed from dg_l/dphi_l = j e^{j phi_l}.
inline ObjectiveEval dl_phase_objective(const Vec& phi, const CMat& b, const CVec& y) {
    const std::size_t n_path = b.cols();
    if (phi.size() != n_path)
        throw std::invalid_argument("dl_phase_objective: phi length must match columns");
    if (y.size() != b.rows())
        throw std::invalid_argument("dl_phase_objective: observation length mismatch");

    CVec g(n_path);
    for (std::size_t l = 0; l < n_path; ++l)
        g[l] = std::polar(1.0, phi[l]);

    ObjectiveEval out;
    out.grad.assign(n_path, 0.0);
    CVec resid(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        cplx acc{};
        for (std::size_t l = 0; l < n_path; ++l)
            acc += b(i, l) * g[l];
        resid[i] = y[i] - acc;
        out.value += std::norm(resid[i]);
    }
    for (std::size_t l = 0; l < n_path; ++l) {
        cplx t{};
        for (std::size_t i = 0; i < y.size(); ++i)
            t += std::conj(resid[i]) * b(i, l);
        out.grad[l] = 2.0 * (t * g[l]).imag();
    }
    return out;
}

} // namespace fdmimo
