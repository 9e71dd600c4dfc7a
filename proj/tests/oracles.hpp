#pragma once

// Test-only oracles.  Each one is an independent computation route for a
// quantity the library produces; none of them share code with the
// implementation they check.

#include <cmath>
#include <cstdint>
#include <vector>

#include "lazylab/linalg.hpp"
#include "lazylab/network.hpp"
#include "lazylab/rng.hpp"

namespace oracle {

// Singular values via one-sided (Hestenes) Jacobi: rotate column pairs until
// mutually orthogonal; the singular values are the column norms.
inline std::vector<double> jacobi_svd_singular_values(lazylab::Matrix m) {
    const std::size_t rows = m.rows, cols = m.cols;
    if (rows < cols) {  // work on the transpose so columns are the short side
        lazylab::Matrix t(cols, rows);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) t(j, i) = m(i, j);
        m = std::move(t);
    }
    const std::size_t r = m.rows, c = m.cols;
    auto col_dot = [&](std::size_t p, std::size_t q) {
        double s = 0.0;
        for (std::size_t i = 0; i < r; ++i) s += m(i, p) * m(i, q);
        return s;
    };
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < c; ++p) {
            for (std::size_t q = p + 1; q < c; ++q) {
                const double apq = col_dot(p, q);
                const double app = col_dot(p, p);
                const double aqq = col_dot(q, q);
                off = std::max(off, std::abs(apq) / std::sqrt(app * aqq + 1e-300));
                if (std::abs(apq) < 1e-15 * std::sqrt(app * aqq + 1e-300)) continue;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0)
                    ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                    : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = t * cs;
                for (std::size_t i = 0; i < r; ++i) {
                    const double vip = m(i, p), viq = m(i, q);
                    m(i, p) = cs * vip - sn * viq;
                    m(i, q) = sn * vip + cs * viq;
                }
            }
        }
        if (off < 1e-14) break;
    }
    std::vector<double> sv(c);
    for (std::size_t p = 0; p < c; ++p) sv[p] = std::sqrt(col_dot(p, p));
    std::sort(sv.begin(), sv.end(), std::greater<double>());
    return sv;
}

// Kahan-compensated sum in long double.
inline long double compensated_sum(const std::vector<long double>& xs) {
    long double s = 0.0L, comp = 0.0L;
    for (long double x : xs) {
        const long double y = x - comp;
        const long double t = s + y;
        comp = (t - s) - y;
        s = t;
    }
    return s;
}

template <typename F>
double central_difference(F&& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Seeded Monte-Carlo estimate of E f(u, v) for a centered Gaussian pair.
struct McEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
};

template <typename F>
McEstimate mc_expect_pair(F&& f, double k_ii, double k_ij, double k_jj,
                          std::size_t samples, std::uint64_t seed) {
    lazylab::Rng rng(seed);
    const double si = std::sqrt(k_ii), sj = std::sqrt(k_jj);
    const double rho = k_ij / (si * sj);
    const double rr = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    long double acc = 0.0L, acc2 = 0.0L;
    for (std::size_t k = 0; k < samples; ++k) {
        const double z1 = rng.gaussian();
        const double z2 = rng.gaussian();
        const double u = si * z1;
        const double v = sj * (rho * z1 + rr * z2);
        const long double val = f(u, v);
        acc += val;
        acc2 += val * val;
    }
    const long double n = static_cast<long double>(samples);
    McEstimate e;
    e.mean = static_cast<double>(acc / n);
    const long double var = (acc2 / n - (acc / n) * (acc / n)) / (n - 1.0L);
    e.standard_error = static_cast<double>(std::sqrt(std::max(0.0L, var)));
    return e;
}

// Literal normalized forward:
//   xbar^[l] = (1/sqrt(m)) sigma(c_l Wbar^[l] xbar^[l-1]) / c_l,
//   c_l = (sqrt m)^{l-1} prod_{k<=l} beta_k,   Wbar^[l] = sqrt(m) * stored block.
// A deliberately separate route from the canonical form in the library.
inline double forward_normalized_literal(const lazylab::NormalizedParams& np,
                                         const std::vector<double>& input,
                                         const lazylab::ScalingConfig& cfg,
                                         const lazylab::Activation& act,
                                         std::vector<std::vector<double>>* hiddens = nullptr) {
    const double sqm = std::sqrt(static_cast<double>(cfg.m));
    std::vector<double> h = input;
    for (std::size_t l = 0; l < cfg.L; ++l) {
        double c_l = std::pow(sqm, static_cast<double>(l));  // (sqrt m)^{l-1}, 1-based l
        for (std::size_t k = 0; k <= l; ++k) c_l *= cfg.beta[k];
        const lazylab::Matrix& stored = np.Wbar_over_sqrtm[l];
        std::vector<double> z(stored.rows, 0.0);
        for (std::size_t i = 0; i < stored.rows; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < stored.cols; ++j)
                acc += (sqm * stored(i, j)) * h[j];
            z[i] = acc;
        }
        for (double& v : z) v = act.f0(c_l * v) / (sqm * c_l);
        h = std::move(z);
        if (hiddens) hiddens->push_back(h);
    }
    double f = 0.0;
    for (std::size_t k = 0; k < np.abar_over_sqrtm.size(); ++k)
        f += np.abar_over_sqrtm[k] * h[k];
    return f;
}

}  // namespace oracle
