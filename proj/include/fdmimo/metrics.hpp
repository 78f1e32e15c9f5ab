// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fdmimo/linalg.hpp"
#include "fdmimo/rng.hpp"

namespace fdmimo {

/// Per-subcarrier normalized squared channel error, averaged over
/// subcarriers. Linear units; convert with to_db for reporting.
inline double nmse(const std::vector<CVec>& h_true, const std::vector<CVec>& h_est) {
    if (h_true.empty() || h_true.size() != h_est.size())
        throw std::invalid_argument("nmse: channel lists must be nonempty and match");
    double acc = 0.0;
    for (std::size_t k = 0; k < h_true.size(); ++k) {
        if (h_true[k].size() != h_est[k].size())
            throw std::invalid_argument("nmse: channel dims differ at subcarrier " + std::to_string(k));
        const double denom = norm2sq(h_true[k]);
        if (denom == 0.0)
            throw std::invalid_argument("nmse: zero-norm true channel");
        double err = 0.0;
        for (std::size_t i = 0; i < h_true[k].size(); ++i)
            err += std::norm(h_true[k][i] - h_est[k][i]);
        acc += err / denom;
    }
    return acc / static_cast<double>(h_true.size());
}

inline double to_db(double linear) { return 10.0 * std::log10(linear); }

/// Single-user rate with maximum-ratio transmission along the estimated
/// channel: (1/K) sum log2(1 + P_T |h^H w|^2 / sigma^2), w = h_est/||h_est||.
/// A zero estimate contributes log2(1) = 0.
inline double rate_bps_hz(const std::vector<CVec>& h_true, const std::vector<CVec>& h_est,
                          double pilot_power, double noise_var) {
    if (h_true.empty() || h_true.size() != h_est.size())
        throw std::invalid_argument("rate: channel lists must be nonempty and match");
    double acc = 0.0;
    for (std::size_t k = 0; k < h_true.size(); ++k) {
        if (h_true[k].size() != h_est[k].size())
            throw std::invalid_argument("rate: channel dims differ at subcarrier " + std::to_string(k));
        const double west = norm2(h_est[k]);
        if (west == 0.0)
            continue;
        cplx gain{};
        for (std::size_t i = 0; i < h_true[k].size(); ++i)
            gain += std::conj(h_true[k][i]) * h_est[k][i];
        const double sinr = pilot_power * std::norm(gain) / (west * west) / noise_var;
        acc += std::log2(1.0 + sinr);
    }
    return acc / static_cast<double>(h_true.size());
}

/// Monte-Carlo QPSK symbol error rate: beamform along the estimated channel,
/// equalize with the estimated effective gain, decide per quadrant. A zero
/// estimate means no coherent beam, so those trials are blind guesses.
inline double ser_qpsk(const std::vector<CVec>& h_true, const std::vector<CVec>& h_est,
                       double pilot_power, double noise_var, int trials, Rng& rng) {
    if (trials < 1)
        throw std::invalid_argument("ser_qpsk: trials must be >= 1");
    if (h_true.empty() || h_true.size() != h_est.size())
        throw std::invalid_argument("ser_qpsk: channel lists must be nonempty and match");
    const double amp = std::sqrt(pilot_power / 2.0);
    long errors = 0;
    long total = 0;
    for (std::size_t k = 0; k < h_true.size(); ++k) {
        const double west = norm2(h_est[k]);
        cplx gain_true{};
        for (std::size_t i = 0; i < h_true[k].size(); ++i)
            gain_true += std::conj(h_true[k][i]) * h_est[k][i];
        const double gain_est = west; // h_est^H w = ||h_est||
        for (int t = 0; t < trials; ++t) {
            const int sym = rng.uniform_int(4);
            if (west == 0.0) {
                errors += rng.uniform_int(4) != sym;
                ++total;
                continue;
            }
            const cplx s{amp * ((sym & 1) ? -1.0 : 1.0), amp * ((sym & 2) ? -1.0 : 1.0)};
            const cplx r = (gain_true / west) * s + rng.complex_normal(noise_var);
            const cplx eq = r / gain_est;
            const int decided = ((eq.real() < 0.0) ? 1 : 0) | ((eq.imag() < 0.0) ? 2 : 0);
            errors += decided != sym;
            ++total;
        }
    }
    return static_cast<double>(errors) / static_cast<double>(total);
}

/// Feedback corruption of the reported phases: phi + N(0, sigma^2) per path,
/// sigma given in degrees, result wrapped to [0, 2pi).
inline Vec inject_feedback_error(const Vec& phi, double sigma_deg, Rng& rng) {
    const double sigma = sigma_deg * kPi / 180.0;
    Vec out(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i) {
        const double noisy = phi[i] + sigma * rng.normal();
        double wrapped = std::fmod(noisy, kTwoPi);
        if (wrapped < 0.0)
            wrapped += kTwoPi;
        out[i] = wrapped;
    }
    return out;
}

} // namespace fdmimo
