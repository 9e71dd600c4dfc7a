#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lazylab/activation.hpp"
#include "lazylab/gram.hpp"
#include "lazylab/linalg.hpp"
#include "lazylab/network.hpp"
#include "lazylab/rng.hpp"

namespace lazylab {

// ---------------------------------------------------------------------------
// Gauss-Hermite quadrature for the standard normal weight.  Nodes and weights
// come from Golub-Welsch on the symmetric tridiagonal recurrence of the
// probabilists' Hermite polynomials (off-diagonal sqrt(k)), solved with the
// Jacobi eigensolver; the weight of node k is the squared first component of
// its eigenvector.  Rules are cached per order.
// ---------------------------------------------------------------------------

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;  // sums to 1
};

inline QuadratureRule compute_hermite_rule(std::size_t order) {
    detail::require(order >= 1, "hermite_rule: order must be >= 1");
    Matrix j(order, order);
    for (std::size_t k = 1; k < order; ++k) {
        const double b = std::sqrt(static_cast<double>(k));
        j(k - 1, k) = b;
        j(k, k - 1) = b;
    }
    EigenSystem es = jacobi_eigensystem(j, 1e-14, true);
    QuadratureRule rule;
    rule.nodes = es.values;
    rule.weights.resize(order);
    for (std::size_t k = 0; k < order; ++k) {
        const double v0 = es.vectors(0, k);
        rule.weights[k] = v0 * v0;
    }
    return rule;
}

inline const QuadratureRule& hermite_rule(std::size_t order) {
    static std::map<std::size_t, QuadratureRule> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(order);
    if (it == cache.end()) it = cache.emplace(order, compute_hermite_rule(order)).first;
    return it->second;
}

// 2x2 covariance of a centered Gaussian pair.  The correlation clamp keeps
// sqrt(1 - rho^2) real when the recursion emits nearly-parallel entries.
struct Covariance2 {
    double k_ii = 1.0;
    double k_ij = 0.0;
    double k_jj = 1.0;

    static constexpr double correlation_clamp = 1e-9;

    void validate() const {
        detail::require(k_ii > 0.0 && k_jj > 0.0, "Covariance2: diagonal must be positive");
        const double det = k_ii * k_jj - k_ij * k_ij;
        if (det < -1e-12 * std::max(1.0, k_ii * k_jj))
            throw std::runtime_error("Covariance2: matrix is indefinite (det " +
                                     std::to_string(det) + ")");
    }
    double correlation() const {
        const double rho = k_ij / std::sqrt(k_ii * k_jj);
        return std::clamp(rho, -1.0 + correlation_clamp, 1.0 - correlation_clamp);
    }
};

// E_{(u,v) ~ N(0, A)} f(u, v) on a tensor grid of order^2 nodes after the
// factorization u = sqrt(k_ii) z1, v = sqrt(k_jj)(rho z1 + sqrt(1-rho^2) z2).
template <typename F>
double gauss2_expect(F&& f, const Covariance2& a, std::size_t order) {
    detail::require(order >= 2, "gauss2_expect: order must be >= 2");
    a.validate();
    const QuadratureRule& rule = hermite_rule(order);
    const double si = std::sqrt(a.k_ii);
    const double sj = std::sqrt(a.k_jj);
    const double rho = a.correlation();
    const double rr = std::sqrt(1.0 - rho * rho);
    double acc = 0.0;
    for (std::size_t i = 0; i < order; ++i) {
        const double z1 = rule.nodes[i];
        const double u = si * z1;
        double inner = 0.0;
        for (std::size_t j = 0; j < order; ++j) {
            const double v = sj * (rho * z1 + rr * rule.nodes[j]);
            inner += rule.weights[j] * f(u, v);
        }
        acc += rule.weights[i] * inner;
    }
    return acc;
}

template <typename F>
double gauss1_expect(F&& f, double variance, std::size_t order) {
    detail::require(order >= 2 && variance > 0.0, "gauss1_expect: bad arguments");
    const QuadratureRule& rule = hermite_rule(order);
    const double s = std::sqrt(variance);
    double acc = 0.0;
    for (std::size_t k = 0; k < order; ++k)
        acc += rule.weights[k] * f(s * rule.nodes[k]);
    return acc;
}

// ---------------------------------------------------------------------------
// Limiting kernel recursion.  With eps_l the layer scale from the config,
//
//   Ktilde^[0]_ij = <x_i, x_j>
//   A^[l]_ij      = 2x2 covariance from Ktilde^[l-1]
//   Ktilde^[l]_ij = E sigma(eps_l u) sigma(eps_l v) / eps_l^2
//   Itilde^[l]_ij = E sigma'(eps_l u) sigma'(eps_l v)
//   K^[L+1] = Ktilde^[L],   K^[l] = Ktilde^[l-1] o Itilde^[l] o ... o Itilde^[L]
//
// lambda_S = min over l of the least eigenvalue of K^[l].
// ---------------------------------------------------------------------------

struct KernelStack {
    std::vector<Matrix> Ktilde;  // L+1 matrices, index 0..L
    std::vector<Matrix> Itilde;  // L matrices
    std::vector<Matrix> K;       // L+1 matrices
    double lambda_S = 0.0;
    std::size_t quad_order = 0;
};

struct KernelOptions {
    std::size_t order = 80;
    bool confirm = true;        // recompute at double order, require entry stability
    double confirm_tol = 1e-8;  // max permitted entry movement under doubling
    std::optional<std::vector<double>> eps_override;  // forced layer scales
};

namespace detail {

struct KernelLevels {
    std::vector<Matrix> Ktilde;
    std::vector<Matrix> Itilde;
};

inline KernelLevels kernel_levels(const Dataset& s, std::size_t L,
                                  const std::vector<double>& eps, const Activation& act,
                                  std::size_t order) {
    const std::size_t n = s.n;
    KernelLevels lv;
    Matrix k0(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const double v = dot(s.X[i], s.X[j]);
            k0(i, j) = v;
            k0(j, i) = v;
        }
    lv.Ktilde.push_back(std::move(k0));
    for (std::size_t l = 1; l <= L; ++l) {
        const double e = eps[l - 1];
        require(e > 0.0 && std::isfinite(e), "limiting_kernels: bad layer scale");
        const Matrix& prev = lv.Ktilde[l - 1];
        Matrix kt(n, n), it(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i; j < n; ++j) {
                double kv, iv;
                if (i == j) {
                    // diagonal entries are one-dimensional expectations; the
                    // bivariate factorization would clamp rho at 1
                    kv = gauss1_expect(
                        [&](double u) {
                            const double t = act.f0(e * u) / e;
                            return t * t;
                        },
                        prev(i, i), order);
                    iv = gauss1_expect(
                        [&](double u) {
                            const double t = act.f1(e * u);
                            return t * t;
                        },
                        prev(i, i), order);
                } else {
                    Covariance2 a{prev(i, i), prev(i, j), prev(j, j)};
                    kv = gauss2_expect(
                        [&](double u, double v) {
                            return act.f0(e * u) * act.f0(e * v) / (e * e);
                        },
                        a, order);
                    iv = gauss2_expect(
                        [&](double u, double v) { return act.f1(e * u) * act.f1(e * v); },
                        a, order);
                }
                kt(i, j) = kv;
                kt(j, i) = kv;
                it(i, j) = iv;
                it(j, i) = iv;
            }
        }
        lv.Ktilde.push_back(std::move(kt));
        lv.Itilde.push_back(std::move(it));
    }
    return lv;
}

}  // namespace detail

struct QuadratureMovement {
    double worst = 0.0;
    std::string worst_entry;
};

namespace detail {

inline QuadratureMovement levels_movement(const KernelLevels& coarse,
                                          const KernelLevels& fine) {
    QuadratureMovement mv;
    for (std::size_t l = 0; l < coarse.Ktilde.size(); ++l)
        for (std::size_t k = 0; k < coarse.Ktilde[l].data.size(); ++k) {
            const double d = std::abs(coarse.Ktilde[l].data[k] - fine.Ktilde[l].data[k]);
            if (d > mv.worst) {
                mv.worst = d;
                mv.worst_entry = "Ktilde[" + std::to_string(l) + "] entry " + std::to_string(k);
            }
        }
    for (std::size_t l = 0; l < coarse.Itilde.size(); ++l)
        for (std::size_t k = 0; k < coarse.Itilde[l].data.size(); ++k) {
            const double d = std::abs(coarse.Itilde[l].data[k] - fine.Itilde[l].data[k]);
            if (d > mv.worst) {
                mv.worst = d;
                mv.worst_entry = "Itilde[" + std::to_string(l + 1) + "] entry " + std::to_string(k);
            }
        }
    return mv;
}

}  // namespace detail

// Movement of every kernel entry when the quadrature order doubles; the
// adaptive-confirmation measure.
inline QuadratureMovement kernel_quadrature_movement(const Dataset& s,
                                                     const ScalingConfig& cfg,
                                                     const Activation& act,
                                                     const KernelOptions& opt = {}) {
    const std::size_t L = cfg.L;
    const std::vector<double>& eps = opt.eps_override ? *opt.eps_override : cfg.eps;
    detail::require(eps.size() == L, "kernel_quadrature_movement: need one scale per layer");
    return detail::levels_movement(detail::kernel_levels(s, L, eps, act, opt.order),
                                   detail::kernel_levels(s, L, eps, act, 2 * opt.order));
}

inline KernelStack limiting_kernels(const Dataset& s, const ScalingConfig& cfg,
                                    const Activation& act,
                                    const KernelOptions& opt = {}) {
    const std::size_t L = cfg.L;
    const std::vector<double>& eps = opt.eps_override ? *opt.eps_override : cfg.eps;
    detail::require(eps.size() == L, "limiting_kernels: need one scale per layer");

    detail::KernelLevels lv = detail::kernel_levels(s, L, eps, act, opt.order);
    if (opt.confirm) {
        const QuadratureMovement mv = detail::levels_movement(
            lv, detail::kernel_levels(s, L, eps, act, 2 * opt.order));
        if (mv.worst > opt.confirm_tol)
            throw std::runtime_error(
                "limiting_kernels: quadrature not converged at order " +
                std::to_string(opt.order) + "; doubling moved " + mv.worst_entry + " by " +
                std::to_string(mv.worst));
    }

    KernelStack ks;
    ks.quad_order = opt.order;
    ks.Ktilde = std::move(lv.Ktilde);
    ks.Itilde = std::move(lv.Itilde);
    ks.K.reserve(L + 1);
    for (std::size_t l = 1; l <= L; ++l) {
        Matrix k = ks.Ktilde[l - 1];
        for (std::size_t j = l - 1; j < L; ++j) k = hadamard(k, ks.Itilde[j]);
        ks.K.push_back(std::move(k));
    }
    ks.K.push_back(ks.Ktilde[L]);
    ks.lambda_S = std::numeric_limits<double>::infinity();
    for (const Matrix& k : ks.K)
        ks.lambda_S = std::min(ks.lambda_S, symmetric_min_eigenvalue(k, 1e-12).min_eigenvalue);
    return ks;
}

// Chained least-eigenvalue lower bound for K^[l]: Oppenheim peels each
// Hadamard factor down to det(Ktilde^[l-1]), and the Hong-Pan eigenvalue
// bound converts the determinant:
//   lambda_min(K^[l]) >= ((n-1)/||K^[l]||_F^2)^((n-1)/2)
//                        * prod_{k=l..L} prod_i Itilde^[k]_ii * det(Ktilde^[l-1]).
// The prefactor keeps the Frobenius norm of the bounded matrix; replacing it
// by ((n-1)/n)^((n-1)/2) is valid only when ||K^[l]||_F^2 <= n, which unit
// inputs do not guarantee.
inline double hadamard_chain_bound(const KernelStack& ks, std::size_t l) {
    detail::require(l >= 1 && l <= ks.Itilde.size(), "hadamard_chain_bound: bad layer");
    const std::size_t n = ks.Ktilde[0].rows;
    const double nn = static_cast<double>(n);
    const double fro2 = [&] {
        const Matrix& k = ks.K[l - 1];
        double s = 0.0;
        for (double x : k.data) s += x * x;
        return s;
    }();
    const double f = (n == 1) ? 1.0 : std::pow((nn - 1.0) / fro2, (nn - 1.0) / 2.0);
    const std::size_t L = ks.Itilde.size();
    double bound = f;
    for (std::size_t k = l - 1; k < L; ++k)
        for (std::size_t i = 0; i < n; ++i) bound *= ks.Itilde[k](i, i);
    bound *= determinant_pd(ks.Ktilde[l - 1]);
    return bound;
}

// ---------------------------------------------------------------------------
// Large-scale limit of the layer value kernel.  For derivative tails a = 0, b
// the entry limit at correlation c is (b^2/2) * relu_ntk_asymptote(c) with
//   relu_ntk_asymptote(c) = (1/pi) (c (pi - arccos c) + sqrt(1 - c^2)),
// the arc-cosine kernel reached for a = 0, b = sqrt(2).
// ---------------------------------------------------------------------------

inline double relu_ntk_asymptote(double c) {
    detail::require(std::abs(c) <= 1.0, "relu_ntk_asymptote: need |c| <= 1");
    const double root = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double pi = 3.14159265358979323846;
    return (c * (pi - std::acos(c)) + root) / pi;
}

// ---------------------------------------------------------------------------
// Empirical layer-scale envelopes: over a log-spaced grid of scales eps and
// the input range [x0_lo, x0_hi], bound the two ratio families
//   V(eps, x0) = E_{u~N(0,x0^2)} (sigma(eps u)/eps)^2 / x0^2
//   D(eps, x0) = E_{u~N(0,x0^2)} (sigma'(eps u))^2
// whose extremes mu1, mu2 sandwich the diagonal growth of the kernel
// recursion.  V -> 1, D -> 1 as eps -> 0 and both -> (a^2+b^2)/2 as
// eps -> infinity.
// ---------------------------------------------------------------------------

struct SecondMomentReport {
    double mu1 = 0.0;
    double mu2 = 0.0;
    double value_ratio_smallest_eps = 0.0;
    double value_ratio_largest_eps = 0.0;
    double deriv_ratio_smallest_eps = 0.0;
    double deriv_ratio_largest_eps = 0.0;
    std::vector<double> eps_grid;
    std::vector<double> value_ratios;  // at x0 = x0_hi
    std::vector<double> deriv_ratios;
};

inline SecondMomentReport second_moment_bounds(const Activation& act, double x0_lo,
                                               double x0_hi,
                                               const std::vector<double>& eps_grid,
                                               std::size_t order = 128) {
    detail::require(x0_lo > 0.0 && x0_hi >= x0_lo, "second_moment_bounds: bad x0 range");
    detail::require(eps_grid.size() >= 2, "second_moment_bounds: grid too small");
    detail::require(order >= 64, "second_moment_bounds: order must be >= 64");
    double lo = eps_grid.front(), hi = eps_grid.front();
    for (double e : eps_grid) {
        detail::require(e > 0.0, "second_moment_bounds: scales must be positive");
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    detail::require(hi / lo >= 1e6, "second_moment_bounds: grid must span >= 6 decades");

    SecondMomentReport rep;
    rep.eps_grid = eps_grid;
    rep.mu1 = std::numeric_limits<double>::infinity();
    rep.mu2 = 0.0;
    const double x0s[2] = {x0_lo, x0_hi};
    for (double e : eps_grid) {
        for (double x0 : x0s) {
            const double var = x0 * x0;
            const double v = gauss1_expect(
                                 [&](double u) {
                                     const double t = act.f0(e * u) / e;
                                     return t * t;
                                 },
                                 var, order) /
                             var;
            const double dr = gauss1_expect(
                [&](double u) {
                    const double t = act.f1(e * u);
                    return t * t;
                },
                var, order);
            rep.mu1 = std::min({rep.mu1, v, dr});
            rep.mu2 = std::max({rep.mu2, v, dr});
            if (x0 == x0_hi) {
                if (e == lo) {
                    rep.value_ratio_smallest_eps = v;
                    rep.deriv_ratio_smallest_eps = dr;
                }
                if (e == hi) {
                    rep.value_ratio_largest_eps = v;
                    rep.deriv_ratio_largest_eps = dr;
                }
                rep.value_ratios.push_back(v);
                rep.deriv_ratios.push_back(dr);
            }
        }
    }
    if (rep.mu1 <= 0.0)
        throw std::runtime_error("second_moment_bounds: non-positive lower envelope (mu1 = " +
                                 std::to_string(rep.mu1) + ")");
    return rep;
}

// ---------------------------------------------------------------------------
// Width sweep of the initialization-time concentration of the normalized Gram
// matrices around the limiting kernels, with the (3/4) lambda_S eigenvalue
// floor frequency.
// ---------------------------------------------------------------------------

struct ConcentrationRow {
    std::size_t m = 0;
    std::size_t layer = 0;  // 1..L+1
    double median_inf_error = 0.0;
    double iqr = 0.0;
    double floor_fraction = 0.0;  // fraction of seeds with lambda_min >= (3/4) lambda_S
    double lambda_S = 0.0;
};

namespace detail {

inline double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    if (v.empty()) return 0.0;
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    if (i + 1 >= v.size()) return v.back();
    const double frac = pos - static_cast<double>(i);
    return v[i] * (1.0 - frac) + v[i + 1] * frac;
}

}  // namespace detail

inline std::vector<ConcentrationRow> concentration_experiment(
    const std::vector<ScalingConfig>& cfg_family, const Dataset& s, const Activation& act,
    const std::vector<std::uint64_t>& seeds, const KernelOptions& kopt = {}) {
    std::vector<ConcentrationRow> rows;
    for (const ScalingConfig& cfg : cfg_family) {
        KernelStack ks = limiting_kernels(s, cfg, act, kopt);
        const std::size_t layers = cfg.L + 1;
        std::vector<std::vector<double>> errs(layers);
        std::vector<std::size_t> floor_hits(layers, 0);
        for (std::uint64_t seed : seeds) {
            Params p = init_params(cfg, seed);
            NormalizedParams np = normalize_params(p, cfg);
            GramStack gs = gram_normalized_only(np, s, cfg, act);
            for (std::size_t l = 0; l < layers; ++l) {
                double inf_err = 0.0;
                for (std::size_t k = 0; k < gs.G_norm[l].data.size(); ++k)
                    inf_err = std::max(inf_err,
                                       std::abs(gs.G_norm[l].data[k] - ks.K[l].data[k]));
                errs[l].push_back(inf_err);
                if (gs.min_eigs[l] >= 0.75 * ks.lambda_S) ++floor_hits[l];
            }
        }
        for (std::size_t l = 0; l < layers; ++l) {
            ConcentrationRow r;
            r.m = cfg.m;
            r.layer = l + 1;
            r.median_inf_error = detail::percentile(errs[l], 0.5);
            r.iqr = detail::percentile(errs[l], 0.75) - detail::percentile(errs[l], 0.25);
            r.floor_fraction =
                static_cast<double>(floor_hits[l]) / static_cast<double>(seeds.size());
            r.lambda_S = ks.lambda_S;
            rows.push_back(r);
        }
    }
    return rows;
}

inline void save_kernel_stack(const KernelStack& ks, std::ostream& os) {
    for (std::size_t l = 0; l < ks.K.size(); ++l) {
        os << "# K layer " << (l + 1) << "\n";
        save_gram(ks.K[l], os);
    }
    os << "lambda_S," << detail::fmt_double(ks.lambda_S) << ",quad_order," << ks.quad_order
       << "\n";
}

}  // namespace lazylab
