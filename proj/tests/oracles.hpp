// SPDX-License-Identifier: Apache-2.0
//
// Test-only oracles, kept independent of the library code paths they check:
// central finite differences, scalar-loop channel synthesis, and the
// closed-form QPSK symbol error rate.
#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "fdmimo/linalg.hpp"

namespace oracles {

/// Central finite-difference gradient of f at x. The step scales with the
/// coordinate magnitude to balance truncation against roundoff.
inline fdmimo::Vec fd_gradient(const std::function<double(const fdmimo::Vec&)>& f,
                               const fdmimo::Vec& x, double step = 1e-6) {
    fdmimo::Vec g(x.size());
    fdmimo::Vec probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        const double h = step * std::max(1.0, std::abs(v));
        probe[i] = v + h;
        const double fp = f(probe);
        probe[i] = v - h;
        const double fm = f(probe);
        probe[i] = v;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Worst relative disagreement between two gradients. Entries far below the
/// overall gradient scale are dominated by finite-difference roundoff, so the
/// denominator is floored at a small fraction of the largest entry (or at the
/// caller's explicit floor).
inline double max_rel_gradient_error(const fdmimo::Vec& analytic, const fdmimo::Vec& numeric,
                                     double floor = 0.0) {
    if (floor <= 0.0) {
        double gmax = 1e-8;
        for (std::size_t i = 0; i < analytic.size(); ++i)
            gmax = std::max({gmax, std::abs(analytic[i]), std::abs(numeric[i])});
        floor = 1e-4 * gmax;
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

/// Scalar-loop multipath channel entry: sum_l gain * exp(j(phase + beta*delay
/// + spatial*sin(angle))) evaluated one term at a time with std::polar.
inline std::complex<double> channel_entry(const fdmimo::Vec& gain, const fdmimo::Vec& delay,
                                          const fdmimo::Vec& angle, const fdmimo::Vec& phase,
                                          double beta, double spatial) {
    std::complex<double> acc{};
    for (std::size_t l = 0; l < gain.size(); ++l)
        acc += gain[l] * std::polar(1.0, phase[l] + beta * delay[l] + spatial * std::sin(angle[l]));
    return acc;
}

inline double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

/// Gray-coded QPSK symbol error probability at per-symbol SNR gamma.
inline double qpsk_ser(double gamma) {
    const double q = q_function(std::sqrt(gamma));
    return 2.0 * q - q * q;
}

} // namespace oracles
