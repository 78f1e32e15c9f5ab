// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fdmimo {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

namespace detail {

[[nodiscard]] constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

} // namespace detail

/// Deterministic random stream built on std::mt19937_64. Gaussian draws use
/// an explicit Box-Muller transform so the sequence never depends on the
/// standard library's distribution internals. Value type: a copy replays the
/// same tail of the sequence, which is what the gradient checks rely on to
/// freeze dropout masks.
///
/// One master seed fans out into independent per-component streams through
/// child("label") / child("label", index); children are derived from the
/// base seed, not from the current stream position.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Modulo bias is below 2^-50 for any n that
    /// fits an int, which is irrelevant at the sample sizes used here.
    int uniform_int(int n) { return static_cast<int>(gen_() % static_cast<std::uint64_t>(n)); }

    /// Standard normal via Box-Muller, one spare cached per pair.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = kTwoPi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::vector<double> normal_vec(std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v)
            x = normal();
        return v;
    }

    /// Circularly-symmetric complex Gaussian with E|x|^2 = variance.
    std::complex<double> complex_normal(double variance) {
        const double s = std::sqrt(0.5 * variance);
        return {s * normal(), s * normal()};
    }

    [[nodiscard]] Rng child(std::string_view label) const {
        return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(detail::fnv1a64(label))));
    }

    [[nodiscard]] Rng child(std::string_view label, std::uint64_t index) const {
        const std::uint64_t mixed = detail::fnv1a64(label) + 0x9e3779b97f4a7c15ull * (index + 1);
        return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(mixed)));
    }

  private:
    std::uint64_t seed_ = 0;
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace fdmimo
