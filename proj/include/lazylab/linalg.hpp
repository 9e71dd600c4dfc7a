#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace lazylab {

// ---------------------------------------------------------------------------
// Dense row-major matrix.  Everything in this library is small-to-moderate
// (n <= a few thousand), double precision, value semantics.
// ---------------------------------------------------------------------------

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    bool square() const { return rows == cols; }
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline double max_abs(const Matrix& m) {
    double v = 0.0;
    for (double x : m.data) v = std::max(v, std::abs(x));
    return v;
}

inline bool all_finite(const Matrix& m) {
    for (double x : m.data)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace detail

// y = M x
inline std::vector<double> matvec(const Matrix& m, const std::vector<double>& x) {
    detail::require(x.size() == m.cols, "matvec: dimension mismatch");
    std::vector<double> y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* r = m.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) acc += r[j] * x[j];
        y[i] = acc;
    }
    return y;
}

// y = M^T x, streamed over rows so the row-major layout stays cache-friendly
inline std::vector<double> matvec_transposed(const Matrix& m, const std::vector<double>& x) {
    detail::require(x.size() == m.rows, "matvec_transposed: dimension mismatch");
    std::vector<double> y(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* r = m.row(i);
        const double xi = x[i];
        for (std::size_t j = 0; j < m.cols; ++j) y[j] += xi * r[j];
    }
    return y;
}

inline double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double x : m.data) s += x * x;
    return std::sqrt(s);
}

inline double frobenius_distance(const Matrix& a, const Matrix& b) {
    detail::require(a.rows == b.rows && a.cols == b.cols,
                    "frobenius_distance: shape mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.data.size(); ++k) {
        const double d = a.data[k] - b.data[k];
        s += d * d;
    }
    return std::sqrt(s);
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    detail::require(a.rows == b.rows && a.cols == b.cols, "hadamard: shape mismatch");
    Matrix out(a.rows, a.cols);
    for (std::size_t k = 0; k < a.data.size(); ++k) out.data[k] = a.data[k] * b.data[k];
    return out;
}

// ---------------------------------------------------------------------------
// Symmetric eigensolver: cyclic Jacobi rotations.  Certified by the remaining
// off-diagonal Frobenius mass; adequate and simple for the n <= 64 matrices
// this library produces, plus the quadrature-node tridiagonals.
// ---------------------------------------------------------------------------

struct SymmetricSpectrumReport {
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
    std::size_t iterations = 0;  // sweeps
    double off_diagonal_residual = 0.0;  // relative to the input Frobenius norm
};

struct EigenSystem {
    std::vector<double> values;  // ascending
    Matrix vectors;              // column k is the eigenvector of values[k]
    SymmetricSpectrumReport report;
};

namespace detail {

inline double off_diagonal_frobenius(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = i + 1; j < a.cols; ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
}

inline void check_symmetric(const Matrix& m, const char* who) {
    require(m.square(), std::string(who) + ": matrix must be square");
    require(all_finite(m), std::string(who) + ": non-finite entries");
    const double scale = max_abs(m);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = i + 1; j < m.cols; ++j)
            require(std::abs(m(i, j) - m(j, i)) <= 1e-12 * std::max(1.0, scale),
                    std::string(who) + ": matrix not symmetric");
}

}  // namespace detail

inline EigenSystem jacobi_eigensystem(Matrix a, double tol = 1e-10,
                                      bool want_vectors = true) {
    detail::check_symmetric(a, "jacobi_eigensystem");
    const std::size_t n = a.rows;
    const double norm0 = std::max(frobenius_norm(a),
                                  std::numeric_limits<double>::min());
    Matrix v = want_vectors ? Matrix::identity(n) : Matrix();
    const std::size_t sweep_cap = 100 * n * n + 30;
    std::size_t sweep = 0;
    double off = detail::off_diagonal_frobenius(a);
    while (off > tol * norm0 && sweep < sweep_cap) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p), aqq = a(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0)
                    ? 1.0 / (theta + std::sqrt(1.0 + theta * theta))
                    : 1.0 / (theta - std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                if (want_vectors) {
                    for (std::size_t k = 0; k < n; ++k) {
                        const double vkp = v(k, p), vkq = v(k, q);
                        v(k, p) = c * vkp - s * vkq;
                        v(k, q) = s * vkp + c * vkq;
                    }
                }
            }
        }
        ++sweep;
        off = detail::off_diagonal_frobenius(a);
    }
    if (off > tol * norm0) {
        throw std::runtime_error(
            "jacobi_eigensystem: no convergence after " + std::to_string(sweep) +
            " sweeps, off-diagonal residual " + std::to_string(off / norm0));
    }

    EigenSystem es;
    es.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) es.values[i] = a(i, i);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return es.values[x] < es.values[y]; });
    std::vector<double> sorted(n);
    for (std::size_t i = 0; i < n; ++i) sorted[i] = es.values[order[i]];
    es.values = std::move(sorted);
    if (want_vectors) {
        es.vectors = Matrix(n, n);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < n; ++i) es.vectors(i, k) = v(i, order[k]);
    }
    es.report.min_eigenvalue = es.values.front();
    es.report.max_eigenvalue = es.values.back();
    es.report.iterations = sweep;
    es.report.off_diagonal_residual = off / norm0;
    return es;
}

inline SymmetricSpectrumReport symmetric_min_eigenvalue(const Matrix& m,
                                                        double tol = 1e-10) {
    return jacobi_eigensystem(m, tol, /*want_vectors=*/false).report;
}

inline std::vector<double> symmetric_eigenvalues(const Matrix& m, double tol = 1e-10) {
    return jacobi_eigensystem(m, tol, /*want_vectors=*/false).values;
}

// ---------------------------------------------------------------------------
// Largest singular value by power iteration on M^T M (two matvecs per step,
// M^T M never formed).  Deterministic all-ones start; if the start vector is
// annihilated or the estimate stalls early, one deterministic perturbation
// retry re-seeds the iterate.
// ---------------------------------------------------------------------------

inline double operator_norm(const Matrix& m, double tol = 1e-10) {
    detail::require(detail::all_finite(m), "operator_norm: non-finite entries");
    if (m.rows == 0 || m.cols == 0) return 0.0;
    if (detail::max_abs(m) == 0.0) return 0.0;

    const std::size_t n = m.cols;
    auto normalize = [](std::vector<double>& x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        s = std::sqrt(s);
        if (s > 0.0)
            for (double& v : x) v /= s;
        return s;
    };
    auto perturb = [](std::vector<double>& x) {
        for (std::size_t j = 0; j < x.size(); ++j)
            x[j] += (j % 2 == 0 ? 1.0 : -1.0) * (1e-6 + 1e-8 * static_cast<double>(j));
    };

    std::vector<double> x(n, 1.0);
    normalize(x);
    const std::size_t iter_cap = 100 * n * n + 100000;
    double sigma = 0.0;
    bool retried = false;
    double last = -1.0;
    std::size_t stable = 0;
    for (std::size_t it = 0; it < iter_cap; ++it) {
        std::vector<double> y = matvec(m, x);
        double ny = 0.0;
        for (double v : y) ny += v * v;
        ny = std::sqrt(ny);
        if (ny == 0.0) {
            // start vector in the null space; genuine zero matrices returned above
            if (retried) return 0.0;
            retried = true;
            perturb(x);
            normalize(x);
            continue;
        }
        sigma = ny;  // ||M x|| with ||x|| = 1
        x = matvec_transposed(m, y);
        normalize(x);
        if (last >= 0.0 && std::abs(sigma - last) <= tol * std::max(sigma, 1e-300)) {
            if (++stable >= 3) {
                if (!retried) {
                    // guard against convergence inside an invariant subspace
                    retried = true;
                    stable = 0;
                    perturb(x);
                    normalize(x);
                    continue;
                }
                return sigma;
            }
        } else {
            stable = 0;
        }
        last = sigma;
    }
    return sigma;
}

// Largest singular value via Golub-Kahan Lanczos on M^T M with full
// reorthogonalization.  Converges in a few dozen steps even when the top of
// the spectrum is clustered, which power iteration cannot afford on the
// m x m Gaussian blocks of the widest experiments.
inline double spectral_norm_lanczos(const Matrix& m, std::size_t steps = 48) {
    detail::require(detail::all_finite(m), "spectral_norm_lanczos: non-finite entries");
    if (m.rows == 0 || m.cols == 0 || detail::max_abs(m) == 0.0) return 0.0;
    const std::size_t n = m.cols;
    steps = std::min(steps, n);

    std::vector<std::vector<double>> basis;
    std::vector<double> alpha, beta;
    std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
    basis.push_back(v);
    std::vector<double> prev;
    for (std::size_t j = 0; j < steps; ++j) {
        std::vector<double> w = matvec_transposed(m, matvec(m, basis[j]));
        if (j > 0)
            for (std::size_t k = 0; k < n; ++k) w[k] -= beta[j - 1] * basis[j - 1][k];
        double a = 0.0;
        for (std::size_t k = 0; k < n; ++k) a += w[k] * basis[j][k];
        alpha.push_back(a);
        for (std::size_t k = 0; k < n; ++k) w[k] -= a * basis[j][k];
        for (const auto& b : basis) {  // full reorthogonalization
            double proj = 0.0;
            for (std::size_t k = 0; k < n; ++k) proj += w[k] * b[k];
            for (std::size_t k = 0; k < n; ++k) w[k] -= proj * b[k];
        }
        double nb = 0.0;
        for (double t : w) nb += t * t;
        nb = std::sqrt(nb);
        if (nb < 1e-300 || j + 1 == steps) break;
        beta.push_back(nb);
        for (double& t : w) t /= nb;
        basis.push_back(std::move(w));
    }
    const std::size_t k = alpha.size();
    Matrix tri(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        tri(i, i) = alpha[i];
        if (i + 1 < k) {
            tri(i, i + 1) = beta[i];
            tri(i + 1, i) = beta[i];
        }
    }
    const double lmax = jacobi_eigensystem(tri, 1e-12, false).report.max_eigenvalue;
    return std::sqrt(std::max(0.0, lmax));
}

// ---------------------------------------------------------------------------
// Cholesky and the Oppenheim/Hong-Pan least-eigenvalue bound for Hadamard
// products: lambda_min(A o B) >= ((n-1)/n)^((n-1)/2) * prod_i a_ii * det(B)
// with A symmetric PSD and B symmetric PD.  The n = 1 prefactor is 1.
// ---------------------------------------------------------------------------

// Lower-triangular Cholesky factor; throws if the matrix is not PD.
inline Matrix cholesky(const Matrix& b) {
    detail::check_symmetric(b, "cholesky");
    const std::size_t n = b.rows;
    Matrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = b(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0)
                    throw std::runtime_error(
                        "cholesky: matrix not positive definite (pivot " +
                        std::to_string(i) + ")");
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return l;
}

inline double determinant_pd(const Matrix& b) {
    Matrix l = cholesky(b);
    double det = 1.0;
    for (std::size_t i = 0; i < l.rows; ++i) det *= l(i, i) * l(i, i);
    return det;
}

inline double hadamard_min_eig_bound(const Matrix& a, const Matrix& b) {
    detail::check_symmetric(a, "hadamard_min_eig_bound");
    detail::check_symmetric(b, "hadamard_min_eig_bound");
    detail::require(a.rows == b.rows, "hadamard_min_eig_bound: size mismatch");
    const std::size_t n = a.rows;
    if (n == 0) return 0.0;
    const double nn = static_cast<double>(n);
    const double prefactor =
        (n == 1) ? 1.0 : std::pow((nn - 1.0) / nn, (nn - 1.0) / 2.0);
    double diag_prod = 1.0;
    for (std::size_t i = 0; i < n; ++i) diag_prod *= a(i, i);
    return prefactor * diag_prod * determinant_pd(b);
}

}  // namespace lazylab
