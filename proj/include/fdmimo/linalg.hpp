// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fdmimo {

using cplx = std::complex<double>;
using Vec = std::vector<double>;
using CVec = std::vector<cplx>;

/// Dense row-major matrix. Dimensions are fixed at construction and must be
/// strictly positive; a default-constructed matrix is the empty placeholder.
template <typename T>
class Matrix {
  public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, T value = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, value) {
        if (rows == 0 || cols == 0)
            throw std::invalid_argument("Matrix: dimensions must be positive");
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            m(i, i) = T{1};
        return m;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<T> col(std::size_t c) const {
        std::vector<T> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            out[r] = (*this)(r, c);
        return out;
    }

    bool operator==(const Matrix&) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Mat = Matrix<double>;
using CMat = Matrix<cplx>;

namespace detail {
inline double conj_mul_real(double a, double b) { return a * b; }
inline cplx conj_of(cplx v) { return std::conj(v); }
inline double conj_of(double v) { return v; }
} // namespace detail

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions differ");
    Matrix<T> out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const T aik = a(i, k);
            if (aik == T{})
                continue;
            for (std::size_t j = 0; j < b.cols(); ++j)
                out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

template <typename T>
std::vector<T> matvec(const Matrix<T>& a, std::span<const T> x) {
    if (a.cols() != x.size())
        throw std::invalid_argument("matvec: dimension mismatch");
    std::vector<T> out(a.rows(), T{});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        T acc{};
        for (std::size_t j = 0; j < a.cols(); ++j)
            acc += a(i, j) * x[j];
        out[i] = acc;
    }
    return out;
}

template <typename T>
std::vector<T> matvec(const Matrix<T>& a, const std::vector<T>& x) {
    return matvec(a, std::span<const T>(x));
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
    Matrix<T> out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            out(j, i) = a(i, j);
    return out;
}

inline CMat adjoint(const CMat& a) {
    CMat out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            out(j, i) = std::conj(a(i, j));
    return out;
}

/// <x, y> = sum conj(x_i) y_i
inline cplx cdot(std::span<const cplx> x, std::span<const cplx> y) {
    if (x.size() != y.size())
        throw std::invalid_argument("cdot: length mismatch");
    cplx acc{};
    for (std::size_t i = 0; i < x.size(); ++i)
        acc += std::conj(x[i]) * y[i];
    return acc;
}

inline double norm2sq(std::span<const cplx> x) {
    double acc = 0.0;
    for (const auto& v : x)
        acc += std::norm(v);
    return acc;
}

inline double norm2sq(std::span<const double> x) {
    double acc = 0.0;
    for (double v : x)
        acc += v * v;
    return acc;
}

inline double norm2(std::span<const cplx> x) { return std::sqrt(norm2sq(x)); }
inline double norm2(std::span<const double> x) { return std::sqrt(norm2sq(x)); }

inline double norm2sq(const CVec& x) { return norm2sq(std::span<const cplx>(x)); }
inline double norm2sq(const Vec& x) { return norm2sq(std::span<const double>(x)); }
inline double norm2(const CVec& x) { return std::sqrt(norm2sq(x)); }
inline double norm2(const Vec& x) { return std::sqrt(norm2sq(x)); }

template <typename T>
bool all_finite(std::span<const T> x) {
    for (const auto& v : x) {
        if constexpr (std::is_same_v<T, cplx>) {
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                return false;
        } else {
            if (!std::isfinite(v))
                return false;
        }
    }
    return true;
}

template <typename T>
bool all_finite(const std::vector<T>& x) {
    return all_finite(std::span<const T>(x));
}

template <typename T>
bool all_finite(const Matrix<T>& m) {
    return all_finite(std::span<const T>(m.data()));
}

/// Thin singular value decomposition a = u * diag(s) * adjoint(v), with s
/// sorted descending. u is rows x r, v is cols x r where r = min(rows, cols).
struct Svd {
    CMat u;
    Vec s;
    CMat v;
};

namespace detail {

/// One-sided Jacobi on a matrix with rows >= cols: orthogonalizes column
/// pairs with complex plane rotations until all cross inner products vanish
/// relative to the column norms.
inline void jacobi_orthogonalize(CMat& w, CMat& v, int max_sweeps) {
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    const double tol = 1e-15;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0;
                cplx apq{};
                for (std::size_t i = 0; i < m; ++i) {
                    const cplx wp = w(i, p), wq = w(i, q);
                    app += std::norm(wp);
                    aqq += std::norm(wq);
                    apq += std::conj(wp) * wq;
                }
                const double mag = std::abs(apq);
                if (mag <= tol * std::sqrt(app * aqq) || app == 0.0 || aqq == 0.0)
                    continue;
                // Phase-align column q, then apply the real Jacobi rotation
                // that zeroes the 2x2 Gram cross term.
                const cplx phase = apq / mag; // e^{j psi}
                const double tau = (aqq - app) / (2.0 * mag);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = t * cs;
                const cplx conj_phase = std::conj(phase);
                for (std::size_t i = 0; i < m; ++i) {
                    const cplx wp = w(i, p);
                    const cplx wq = conj_phase * w(i, q);
                    w(i, p) = cs * wp - sn * wq;
                    w(i, q) = sn * wp + cs * wq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const cplx vp = v(i, p);
                    const cplx vq = conj_phase * v(i, q);
                    v(i, p) = cs * vp - sn * vq;
                    v(i, q) = sn * vp + cs * vq;
                }
                rotated = true;
            }
        }
        if (!rotated)
            break;
    }
}

} // namespace detail

inline Svd svd(const CMat& a, int max_sweeps = 60) {
    if (a.empty())
        throw std::invalid_argument("svd: empty matrix");
    const bool flip = a.rows() < a.cols();
    CMat w = flip ? adjoint(a) : a;
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    CMat v = CMat::identity(n);
    detail::jacobi_orthogonalize(w, v, max_sweeps);

    Vec s(n, 0.0);
    CMat u(m, n);
    for (std::size_t j = 0; j < n; ++j) {
        double nrm = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            nrm += std::norm(w(i, j));
        nrm = std::sqrt(nrm);
        s[j] = nrm;
        if (nrm > 0.0) {
            for (std::size_t i = 0; i < m; ++i)
                u(i, j) = w(i, j) / nrm;
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return s[i] > s[j]; });

    Svd out;
    out.s.resize(n);
    out.u = CMat(m, n);
    out.v = CMat(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.s[j] = s[order[j]];
        for (std::size_t i = 0; i < m; ++i)
            out.u(i, j) = u(i, order[j]);
        for (std::size_t i = 0; i < n; ++i)
            out.v(i, j) = v(i, order[j]);
    }
    if (flip)
        std::swap(out.u, out.v);
    return out;
}

/// Number of singular values above tol times the largest one.
inline int rank(const CMat& a, double tol) {
    if (tol <= 0.0)
        throw std::invalid_argument("rank: tol must be positive");
    const Svd dec = svd(a);
    const double smax = dec.s.empty() ? 0.0 : dec.s.front();
    if (smax == 0.0)
        return 0;
    int r = 0;
    for (double sv : dec.s)
        if (sv > tol * smax)
            ++r;
    return r;
}

namespace detail {

/// Min-norm least squares through the SVD, dropping directions below
/// tol * sigma_max.
inline CVec svd_solve(const CMat& a, const CVec& b, double tol) {
    const Svd dec = svd(a);
    const double smax = dec.s.empty() ? 0.0 : dec.s.front();
    CVec x(a.cols(), cplx{});
    if (smax == 0.0)
        return x;
    for (std::size_t j = 0; j < dec.s.size(); ++j) {
        if (dec.s[j] <= tol * smax)
            continue;
        cplx coef{};
        for (std::size_t i = 0; i < a.rows(); ++i)
            coef += std::conj(dec.u(i, j)) * b[i];
        coef /= dec.s[j];
        for (std::size_t i = 0; i < a.cols(); ++i)
            x[i] += coef * dec.v(i, j);
    }
    return x;
}

} // namespace detail

/// Minimizer of ||a x - b||_2. Householder QR with column pivoting on the
/// full-rank overdetermined path; rank-deficient and underdetermined systems
/// fall back to the SVD min-norm solution.
inline CVec lstsq(const CMat& a, const CVec& b, double rank_tol = 1e-12) {
    if (a.empty())
        throw std::invalid_argument("lstsq: empty matrix");
    if (a.rows() != b.size())
        throw std::invalid_argument("lstsq: rhs length " + std::to_string(b.size()) +
                                    " does not match rows " + std::to_string(a.rows()));
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (m < n)
        return detail::svd_solve(a, b, rank_tol);

    CMat r = a;
    CVec qtb = b;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);

    for (std::size_t k = 0; k < n; ++k) {
        // Pivot: bring the remaining column with the largest norm to front.
        std::size_t best = k;
        double best_norm = -1.0;
        for (std::size_t j = k; j < n; ++j) {
            double nrm = 0.0;
            for (std::size_t i = k; i < m; ++i)
                nrm += std::norm(r(i, j));
            if (nrm > best_norm) {
                best_norm = nrm;
                best = j;
            }
        }
        if (best != k) {
            for (std::size_t i = 0; i < m; ++i)
                std::swap(r(i, k), r(i, best));
            std::swap(perm[k], perm[best]);
        }

        double sigma = std::sqrt(best_norm);
        if (sigma == 0.0)
            continue; // column already zero; R(k,k) stays 0
        const cplx x0 = r(k, k);
        const cplx alpha = (x0 == cplx{}) ? cplx{-sigma, 0.0} : -(x0 / std::abs(x0)) * sigma;

        CVec v(m - k);
        v[0] = x0 - alpha;
        for (std::size_t i = k + 1; i < m; ++i)
            v[i - k] = r(i, k);
        double vnorm2 = norm2sq(v);
        if (vnorm2 == 0.0) {
            r(k, k) = alpha;
            continue;
        }
        const double tau = 2.0 / vnorm2;

        r(k, k) = alpha;
        for (std::size_t i = k + 1; i < m; ++i)
            r(i, k) = cplx{};
        for (std::size_t j = k + 1; j < n; ++j) {
            cplx dot{};
            for (std::size_t i = k; i < m; ++i)
                dot += std::conj(v[i - k]) * r(i, j);
            dot *= tau;
            for (std::size_t i = k; i < m; ++i)
                r(i, j) -= dot * v[i - k];
        }
        cplx dot{};
        for (std::size_t i = k; i < m; ++i)
            dot += std::conj(v[i - k]) * qtb[i];
        dot *= tau;
        for (std::size_t i = k; i < m; ++i)
            qtb[i] -= dot * v[i - k];
    }

    const double rmax = std::abs(r(0, 0));
    bool full_rank = rmax > 0.0;
    for (std::size_t k = 0; k < n && full_rank; ++k)
        if (std::abs(r(k, k)) <= rank_tol * rmax)
            full_rank = false;
    if (!full_rank)
        return detail::svd_solve(a, b, rank_tol);

    CVec y(n);
    for (std::size_t k = n; k-- > 0;) {
        cplx acc = qtb[k];
        for (std::size_t j = k + 1; j < n; ++j)
            acc -= r(k, j) * y[j];
        y[k] = acc / r(k, k);
    }
    CVec x(n);
    for (std::size_t k = 0; k < n; ++k)
        x[perm[k]] = y[k];
    return x;
}

} // namespace fdmimo
