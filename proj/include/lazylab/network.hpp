#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lazylab/activation.hpp"
#include "lazylab/linalg.hpp"
#include "lazylab/rng.hpp"

namespace lazylab {

// ---------------------------------------------------------------------------
// Scaling bookkeeping.
//
// Layer l of an L-layer fully connected net is initialized N(0, beta_l^2)
// with beta_l = m^{-gamma_l}; the output vector uses beta_{L+1}.  Derived
// quantities:
//   alpha_l = sqrt(m) * beta_l
//   kappa   = prod_{k=1..L+1} alpha_k          (initial output scale)
//   eps_l   = (1/sqrt(m)) * prod_{k=1..l} alpha_k   (layer-l kernel scale)
// The laziness exponent s = (L+1)/2 - sum_l gamma_l is the growth rate of
// log kappa / log m; s > 0 is the lazy-regime condition.
// ---------------------------------------------------------------------------

struct ScalingConfig {
    std::size_t L = 1;  // hidden layers
    std::size_t m = 1;  // width
    std::size_t d = 1;  // input dimension
    std::vector<double> gamma;  // L+1 exponents
    std::vector<double> beta;   // L+1, beta_l = m^{-gamma_l}
    std::vector<double> alpha;  // L+1, alpha_l = sqrt(m) beta_l
    double kappa = 1.0;
    std::vector<double> eps;    // L entries, eps_l = alpha_prefix(l)/sqrt(m)
    double laziness_exponent = 0.0;  // s
    bool theta_lazy = false;         // s > 0

    // prod_{k=1..l} alpha_k, l in [1, L]; alpha_prefix(0) = 1
    double alpha_prefix(std::size_t l) const {
        double p = 1.0;
        for (std::size_t k = 0; k < l; ++k) p *= alpha[k];
        return p;
    }
    // sum_l kappa^2 / alpha_l^2, the rate multiplier of the decay bound
    double rate_sum() const {
        double s = 0.0;
        for (std::size_t l = 0; l <= L; ++l) s += (kappa / alpha[l]) * (kappa / alpha[l]);
        return s;
    }
};

inline ScalingConfig make_scaling(std::size_t L, std::size_t m, std::size_t d,
                                  const std::vector<double>& gamma) {
    detail::require(L >= 1 && m >= 1 && d >= 1, "make_scaling: L, m, d must be >= 1");
    detail::require(gamma.size() == L + 1, "make_scaling: gamma must have L+1 entries");
    for (double g : gamma)
        detail::require(std::isfinite(g), "make_scaling: gamma must be finite");
    ScalingConfig cfg;
    cfg.L = L;
    cfg.m = m;
    cfg.d = d;
    cfg.gamma = gamma;
    const double md = static_cast<double>(m);
    cfg.beta.resize(L + 1);
    cfg.alpha.resize(L + 1);
    double gsum = 0.0;
    for (std::size_t l = 0; l <= L; ++l) {
        cfg.beta[l] = std::pow(md, -gamma[l]);
        cfg.alpha[l] = std::sqrt(md) * cfg.beta[l];
        gsum += gamma[l];
    }
    cfg.kappa = 1.0;
    for (std::size_t l = 0; l <= L; ++l) cfg.kappa *= cfg.alpha[l];
    cfg.eps.resize(L);
    for (std::size_t l = 1; l <= L; ++l)
        cfg.eps[l - 1] = cfg.alpha_prefix(l) / std::sqrt(md);
    cfg.laziness_exponent = 0.5 * static_cast<double>(L + 1) - gsum;
    cfg.theta_lazy = cfg.laziness_exponent > 0.0;
    return cfg;
}

// ---------------------------------------------------------------------------
// Parameters.  W[0] is m x d, W[l] is m x m for l >= 1, a has length m.
// ---------------------------------------------------------------------------

struct Params {
    std::vector<Matrix> W;  // L weight matrices
    std::vector<double> a;  // output vector, length m
};

struct NormalizedParams {
    // Wbar_over_sqrtm[l] = W[l] / (sqrt(m) beta_{l+1}), abar_over_sqrtm = a / (sqrt(m) beta_{L+1})
    std::vector<Matrix> Wbar_over_sqrtm;
    std::vector<double> abar_over_sqrtm;
};

// Substream tags for the parameter draw: derive(seed, "params", layer) for
// each weight matrix (row-major fill order), derive(seed, "params", L) for a.
inline Params init_params(const ScalingConfig& cfg, std::uint64_t seed) {
    Params p;
    p.W.reserve(cfg.L);
    for (std::size_t l = 0; l < cfg.L; ++l) {
        const std::size_t cols = (l == 0) ? cfg.d : cfg.m;
        Matrix w(cfg.m, cols);
        Rng rng(derive_seed(seed, "params", l));
        for (double& x : w.data) x = cfg.beta[l] * rng.gaussian();
        p.W.push_back(std::move(w));
    }
    p.a.resize(cfg.m);
    Rng rng(derive_seed(seed, "params", cfg.L));
    for (double& x : p.a) x = cfg.beta[cfg.L] * rng.gaussian();
    return p;
}

inline NormalizedParams normalize_params(const Params& p, const ScalingConfig& cfg) {
    NormalizedParams np;
    np.Wbar_over_sqrtm.reserve(p.W.size());
    const double sqm = std::sqrt(static_cast<double>(cfg.m));
    for (std::size_t l = 0; l < p.W.size(); ++l) {
        Matrix w = p.W[l];
        const double scale = 1.0 / (sqm * cfg.beta[l]);
        for (double& x : w.data) x *= scale;
        np.Wbar_over_sqrtm.push_back(std::move(w));
    }
    np.abar_over_sqrtm = p.a;
    const double scale = 1.0 / (sqm * cfg.beta[cfg.L]);
    for (double& x : np.abar_over_sqrtm) x *= scale;
    return np;
}

inline Params denormalize_params(const NormalizedParams& np, const ScalingConfig& cfg) {
    Params p;
    const double sqm = std::sqrt(static_cast<double>(cfg.m));
    for (std::size_t l = 0; l < np.Wbar_over_sqrtm.size(); ++l) {
        Matrix w = np.Wbar_over_sqrtm[l];
        const double scale = sqm * cfg.beta[l];
        for (double& x : w.data) x *= scale;
        p.W.push_back(std::move(w));
    }
    p.a = np.abar_over_sqrtm;
    const double scale = sqm * cfg.beta[cfg.L];
    for (double& x : p.a) x *= scale;
    return p;
}

// ---------------------------------------------------------------------------
// Forward passes.
// ---------------------------------------------------------------------------

struct ForwardResult {
    double output = 0.0;
    std::vector<std::vector<double>> hiddens;  // x^[1] .. x^[L]
};

namespace detail {

inline void check_finite_layer(const std::vector<double>& v, std::size_t layer,
                               const char* who) {
    for (double x : v)
        if (!std::isfinite(x))
            throw std::runtime_error(std::string(who) + ": non-finite value in layer " +
                                     std::to_string(layer + 1));
}

}  // namespace detail

// x^[l] = sigma(W^[l] x^[l-1]), f = a . x^[L]
inline ForwardResult forward(const Params& p, const std::vector<double>& x,
                             const Activation& act) {
    ForwardResult r;
    r.hiddens.reserve(p.W.size());
    std::vector<double> h = x;
    for (std::size_t l = 0; l < p.W.size(); ++l) {
        h = matvec(p.W[l], h);
        for (double& v : h) v = act.f0(v);
        detail::check_finite_layer(h, l, "forward");
        r.hiddens.push_back(h);
    }
    detail::require(p.a.size() == h.size(), "forward: output size mismatch");
    double f = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k) f += p.a[k] * h[k];
    r.output = f;
    return r;
}

// Normalized forward in the canonical form
//   xbar^[l] = sigma(eta_l * (Wbar^[l]/sqrt(m)) xbar^[l-1]) / eta_l,
//   eta_l = prod_{k<=l} alpha_k = sqrt(m) * eps_l,
//   fbar = (abar/sqrt(m)) . xbar^[L].
// Scaling identities: x^[l] = eta_l xbar^[l] and f = kappa fbar.
inline ForwardResult forward_normalized(const NormalizedParams& np,
                                        const std::vector<double>& x,
                                        const ScalingConfig& cfg, const Activation& act) {
    ForwardResult r;
    r.hiddens.reserve(np.Wbar_over_sqrtm.size());
    std::vector<double> h = x;
    for (std::size_t l = 0; l < np.Wbar_over_sqrtm.size(); ++l) {
        const double eta = cfg.alpha_prefix(l + 1);
        h = matvec(np.Wbar_over_sqrtm[l], h);
        for (double& v : h) v = act.f0(eta * v) / eta;
        detail::check_finite_layer(h, l, "forward_normalized");
        r.hiddens.push_back(h);
    }
    double f = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k) f += np.abar_over_sqrtm[k] * h[k];
    r.output = f;
    return r;
}

// ---------------------------------------------------------------------------
// Dataset: n unit-sphere inputs with pairwise |cos| <= 1 - delta_parallel,
// labels uniform on [-c, c].
// ---------------------------------------------------------------------------

struct Dataset {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    std::size_t n = 0;
    std::size_t d = 0;
    double c = 1.0;
    double delta_parallel = 0.01;
};

inline Dataset generate_dataset(std::size_t n, std::size_t d, double c,
                                double delta_parallel, std::uint64_t seed) {
    detail::require(n >= 1 && d >= 2, "generate_dataset: need n >= 1, d >= 2");
    detail::require(c >= 1.0, "generate_dataset: need c >= 1");
    Dataset s;
    s.n = n;
    s.d = d;
    s.c = c;
    s.delta_parallel = delta_parallel;
    Rng rng(derive_seed(seed, "dataset"));
    const std::size_t attempt_cap = 1000 * n + 100000;
    std::size_t attempts = 0;
    while (s.X.size() < n) {
        if (++attempts > attempt_cap)
            throw std::runtime_error(
                "generate_dataset: rejection budget exhausted; n too large for d and "
                "delta_parallel");
        std::vector<double> x(d);
        double norm2 = 0.0;
        for (double& v : x) {
            v = rng.gaussian();
            norm2 += v * v;
        }
        const double norm = std::sqrt(norm2);
        if (norm < 1e-12) continue;
        for (double& v : x) v /= norm;
        bool ok = true;
        for (const auto& xi : s.X) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += x[k] * xi[k];
            if (std::abs(dot) > 1.0 - delta_parallel) {
                ok = false;
                break;
            }
        }
        if (ok) s.X.push_back(std::move(x));
    }
    s.y.resize(n);
    for (double& v : s.y) v = rng.uniform(-c, c);
    return s;
}

// ---------------------------------------------------------------------------
// Text formats.  Datasets are CSV with header i,x_0..x_{d-1},y; parameter
// snapshots are a portable text format (layer header + row-major entries).
// All floats print with %.17g so reruns byte-reproduce.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline void save_dataset(const Dataset& s, std::ostream& os) {
    os << "i";
    for (std::size_t k = 0; k < s.d; ++k) os << ",x_" << k;
    os << ",y\n";
    for (std::size_t i = 0; i < s.n; ++i) {
        os << i;
        for (std::size_t k = 0; k < s.d; ++k) os << ',' << detail::fmt_double(s.X[i][k]);
        os << ',' << detail::fmt_double(s.y[i]) << '\n';
    }
}

inline Dataset load_dataset(std::istream& is) {
    Dataset s;
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("load_dataset: empty input");
    // header i,x_0..x_{d-1},y
    std::size_t ncols = 1;
    for (char ch : line)
        if (ch == ',') ++ncols;
    if (ncols < 3) throw std::runtime_error("load_dataset: malformed header");
    s.d = ncols - 2;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');  // index, ignored
        std::vector<double> x(s.d);
        for (std::size_t k = 0; k < s.d; ++k) {
            std::getline(ss, cell, ',');
            x[k] = std::stod(cell);
        }
        std::getline(ss, cell, ',');
        s.X.push_back(std::move(x));
        s.y.push_back(std::stod(cell));
    }
    s.n = s.X.size();
    return s;
}

inline void save_params(const Params& p, std::ostream& os) {
    os << "params layers " << p.W.size() << " width " << p.a.size() << "\n";
    for (std::size_t l = 0; l < p.W.size(); ++l) {
        const Matrix& w = p.W[l];
        os << "W " << (l + 1) << ' ' << w.rows << ' ' << w.cols << '\n';
        for (std::size_t i = 0; i < w.rows; ++i) {
            for (std::size_t j = 0; j < w.cols; ++j) {
                if (j) os << ' ';
                os << detail::fmt_double(w(i, j));
            }
            os << '\n';
        }
    }
    os << "a " << p.a.size() << '\n';
    for (std::size_t k = 0; k < p.a.size(); ++k) {
        if (k) os << ' ';
        os << detail::fmt_double(p.a[k]);
    }
    os << '\n';
}

inline Params load_params(std::istream& is) {
    Params p;
    std::string word;
    std::size_t layers = 0, width = 0;
    is >> word;
    if (word != "params") throw std::runtime_error("load_params: bad magic");
    is >> word >> layers >> word >> width;
    for (std::size_t l = 0; l < layers; ++l) {
        std::size_t idx = 0, rows = 0, cols = 0;
        is >> word >> idx >> rows >> cols;
        if (word != "W") throw std::runtime_error("load_params: expected layer header");
        Matrix w(rows, cols);
        for (double& x : w.data) is >> x;
        p.W.push_back(std::move(w));
    }
    std::size_t alen = 0;
    is >> word >> alen;
    if (word != "a") throw std::runtime_error("load_params: expected output header");
    p.a.resize(alen);
    for (double& x : p.a) is >> x;
    if (!is) throw std::runtime_error("load_params: truncated input");
    return p;
}

}  // namespace lazylab
