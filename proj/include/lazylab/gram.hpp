#pragma once

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lazylab/gradflow.hpp"
#include "lazylab/linalg.hpp"
#include "lazylab/network.hpp"

namespace lazylab {

// ---------------------------------------------------------------------------
// Empirical per-layer Gram matrices, computed along two independent routes:
//
//   raw:        G^[l]_ij = <grad_{W^[l]} f(x_i), grad_{W^[l]} f(x_j)>
//                        = <lambda_i^[l], lambda_j^[l]> <x_i^[l-1], x_j^[l-1]>,
//               G^[L+1]_ij = <x_i^[L], x_j^[L]>
//
//   normalized: Gbar^[l]_ij = Hbar^[l]_ij <xbar_i^[l-1], xbar_j^[l-1]>,
//               Hbar^[l]_ij = <lbar_i^[l], lbar_j^[l]>,
//               Gbar^[L+1]_ij = <xbar_i^[L], xbar_j^[L]>
//
// The exact scale relation Gbar^[l] = (alpha_l^2 / kappa^2) G^[l] ties the two
// routes together and runs as a built-in self-test on every full assembly:
// the scaling algebra is the most bug-prone part of the whole artifact.
// ---------------------------------------------------------------------------

struct GramStack {
    std::vector<Matrix> G_raw;   // L+1 matrices, n x n
    std::vector<Matrix> G_norm;  // L+1 matrices, n x n
    std::vector<Matrix> H_norm;  // L matrices, n x n
    std::vector<double> min_eigs;  // least eigenvalue of each G_norm layer
};

namespace detail {

inline double dot(const std::vector<double>& u, const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * v[k];
    return s;
}

}  // namespace detail

// Normalized-route Gram matrices only (the cheap mode used by monitors).
inline GramStack gram_normalized_only(const NormalizedParams& np, const Dataset& s,
                                      const ScalingConfig& cfg, const Activation& act) {
    const std::size_t L = cfg.L;
    const std::size_t n = s.n;
    std::vector<NormalizedTape> tapes;
    tapes.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        tapes.push_back(make_normalized_tape(np, s.X[i], cfg, act));

    GramStack gs;
    gs.H_norm.reserve(L);
    gs.G_norm.reserve(L + 1);
    for (std::size_t l = 0; l < L; ++l) {
        Matrix h(n, n), g(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i; j < n; ++j) {
                const double hij = detail::dot(tapes[i].lambda[l], tapes[j].lambda[l]);
                const double xij = detail::dot(tapes[i].xbar[l], tapes[j].xbar[l]);
                h(i, j) = hij;
                h(j, i) = hij;
                g(i, j) = hij * xij;
                g(j, i) = hij * xij;
            }
        }
        gs.H_norm.push_back(std::move(h));
        gs.G_norm.push_back(std::move(g));
    }
    Matrix top(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const double v = detail::dot(tapes[i].xbar[L], tapes[j].xbar[L]);
            top(i, j) = v;
            top(j, i) = v;
        }
    gs.G_norm.push_back(std::move(top));
    gs.min_eigs.reserve(L + 1);
    for (const Matrix& g : gs.G_norm)
        gs.min_eigs.push_back(symmetric_min_eigenvalue(g, 1e-10).min_eigenvalue);
    return gs;
}

// Full dual-route assembly with the scale-relation cross-check.  A violation
// beyond tolerance signals an implementation bug, not user error.
inline GramStack empirical_gram(const Params& p, const NormalizedParams& np,
                                const Dataset& s, const ScalingConfig& cfg,
                                const Activation& act, double check_tol = 1e-8) {
    const std::size_t L = cfg.L;
    const std::size_t n = s.n;
    GramStack gs = gram_normalized_only(np, s, cfg, act);

    std::vector<SampleTape> tapes;
    tapes.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        tapes.push_back(make_tape(p, s.X[i], s.y[i], act));
    gs.G_raw.reserve(L + 1);
    for (std::size_t l = 0; l < L; ++l) {
        Matrix g(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) {
                const double v = detail::dot(tapes[i].lambda[l], tapes[j].lambda[l]) *
                                 detail::dot(tapes[i].x[l], tapes[j].x[l]);
                g(i, j) = v;
                g(j, i) = v;
            }
        gs.G_raw.push_back(std::move(g));
    }
    Matrix top(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const double v = detail::dot(tapes[i].x[L], tapes[j].x[L]);
            top(i, j) = v;
            top(j, i) = v;
        }
    gs.G_raw.push_back(std::move(top));

    for (std::size_t l = 0; l <= L; ++l) {
        const double scale = (cfg.kappa / cfg.alpha[l]) * (cfg.kappa / cfg.alpha[l]);
        for (std::size_t k = 0; k < n * n; ++k) {
            const double raw = gs.G_raw[l].data[k];
            const double lifted = scale * gs.G_norm[l].data[k];
            if (std::abs(lifted - raw) > check_tol * (1.0 + std::abs(raw)))
                throw std::runtime_error(
                    "empirical_gram: scale relation violated at layer " +
                    std::to_string(l + 1) + ", entry " + std::to_string(k) +
                    " (raw " + std::to_string(raw) + ", lifted " + std::to_string(lifted) +
                    "); this indicates an implementation bug");
        }
    }
    return gs;
}

// G(theta) = sum_l (kappa^2/alpha_l^2) Gbar^[l]; equal to sum_l G^[l].
inline Matrix total_gram(const GramStack& gs, const ScalingConfig& cfg) {
    detail::require(!gs.G_norm.empty(), "total_gram: empty stack");
    const std::size_t n = gs.G_norm[0].rows;
    Matrix total(n, n);
    for (std::size_t l = 0; l < gs.G_norm.size(); ++l) {
        const double scale = (cfg.kappa / cfg.alpha[l]) * (cfg.kappa / cfg.alpha[l]);
        for (std::size_t k = 0; k < n * n; ++k)
            total.data[k] += scale * gs.G_norm[l].data[k];
    }
    return total;
}

inline void save_gram(const Matrix& g, std::ostream& os) {
    for (std::size_t i = 0; i < g.rows; ++i) {
        for (std::size_t j = 0; j < g.cols; ++j) {
            if (j) os << ',';
            os << detail::fmt_double(g(i, j));
        }
        os << '\n';
    }
}

}  // namespace lazylab
