#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lazylab/activation.hpp"
#include "lazylab/linalg.hpp"
#include "lazylab/network.hpp"

namespace lazylab {

// ---------------------------------------------------------------------------
// Per-sample tape: forward activations, preactivations, and the backward
// chain lambda^[l].  With E^[l](x) = diag(sigma'(z_l)) (W^[l+1])^T,
//
//   lambda^[L] = sigma'(z_L) . a
//   lambda^[l] = sigma'(z_l) . (W^[l+1])^T lambda^[l+1]
//
// so that  d f / d W^[l] = lambda^[l] (x^[l-1])^T  and  d f / d a = x^[L].
// One tape per sample powers gradients, Gram assembly, and the monitors.
// ---------------------------------------------------------------------------

struct SampleTape {
    std::vector<std::vector<double>> x;       // x^[0] .. x^[L]
    std::vector<std::vector<double>> preact;  // z^[1] .. z^[L]
    std::vector<std::vector<double>> lambda;  // lambda^[1] .. lambda^[L]
    double output = 0.0;
    double error = 0.0;  // f - y
};

inline SampleTape make_tape(const Params& p, const std::vector<double>& input,
                            double label, const Activation& act) {
    const std::size_t L = p.W.size();
    SampleTape t;
    t.x.reserve(L + 1);
    t.preact.reserve(L);
    t.x.push_back(input);
    for (std::size_t l = 0; l < L; ++l) {
        std::vector<double> z = matvec(p.W[l], t.x.back());
        detail::check_finite_layer(z, l, "make_tape");
        std::vector<double> h(z.size());
        for (std::size_t k = 0; k < z.size(); ++k) h[k] = act.f0(z[k]);
        t.preact.push_back(std::move(z));
        t.x.push_back(std::move(h));
    }
    double f = 0.0;
    for (std::size_t k = 0; k < p.a.size(); ++k) f += p.a[k] * t.x[L][k];
    t.output = f;
    t.error = f - label;

    t.lambda.assign(L, {});
    std::vector<double> lam(p.a.size());
    for (std::size_t k = 0; k < lam.size(); ++k)
        lam[k] = act.f1(t.preact[L - 1][k]) * p.a[k];
    t.lambda[L - 1] = lam;
    for (std::size_t l = L - 1; l-- > 0;) {
        std::vector<double> back = matvec_transposed(p.W[l + 1], t.lambda[l + 1]);
        for (std::size_t k = 0; k < back.size(); ++k)
            back[k] *= act.f1(t.preact[l][k]);
        t.lambda[l] = std::move(back);
    }
    return t;
}

inline std::vector<std::vector<double>> backward_vectors(const Params& p,
                                                         const std::vector<double>& x,
                                                         const Activation& act) {
    return make_tape(p, x, 0.0, act).lambda;
}

// Normalized backward chain, computed entirely from NormalizedParams:
//   lbar^[L] = sigma'(zbar_L) . (abar/sqrt(m))
//   lbar^[l] = sigma'(zbar_l) . (Wbar^[l+1]/sqrt(m))^T lbar^[l+1]
// with zbar_l = eta_l (Wbar^[l]/sqrt(m)) xbar^[l-1] the canonical-form
// preactivation (equal to the raw z_l).
struct NormalizedTape {
    std::vector<std::vector<double>> xbar;    // xbar^[0] .. xbar^[L]
    std::vector<std::vector<double>> lambda;  // lbar^[1] .. lbar^[L]
    double output = 0.0;
};

inline NormalizedTape make_normalized_tape(const NormalizedParams& np,
                                           const std::vector<double>& input,
                                           const ScalingConfig& cfg,
                                           const Activation& act) {
    const std::size_t L = np.Wbar_over_sqrtm.size();
    NormalizedTape t;
    t.xbar.push_back(input);
    std::vector<std::vector<double>> preact(L);
    for (std::size_t l = 0; l < L; ++l) {
        const double eta = cfg.alpha_prefix(l + 1);
        std::vector<double> z = matvec(np.Wbar_over_sqrtm[l], t.xbar.back());
        for (double& v : z) v *= eta;
        detail::check_finite_layer(z, l, "make_normalized_tape");
        std::vector<double> h(z.size());
        for (std::size_t k = 0; k < z.size(); ++k) h[k] = act.f0(z[k]) / eta;
        preact[l] = std::move(z);
        t.xbar.push_back(std::move(h));
    }
    double f = 0.0;
    for (std::size_t k = 0; k < np.abar_over_sqrtm.size(); ++k)
        f += np.abar_over_sqrtm[k] * t.xbar[L][k];
    t.output = f;

    t.lambda.assign(L, {});
    std::vector<double> lam(np.abar_over_sqrtm.size());
    for (std::size_t k = 0; k < lam.size(); ++k)
        lam[k] = act.f1(preact[L - 1][k]) * np.abar_over_sqrtm[k];
    t.lambda[L - 1] = lam;
    for (std::size_t l = L - 1; l-- > 0;) {
        std::vector<double> back = matvec_transposed(np.Wbar_over_sqrtm[l + 1], t.lambda[l + 1]);
        for (std::size_t k = 0; k < back.size(); ++k)
            back[k] *= act.f1(preact[l][k]);
        t.lambda[l] = std::move(back);
    }
    return t;
}

// ---------------------------------------------------------------------------
// Loss and gradients.
// ---------------------------------------------------------------------------

struct LossResult {
    double risk = 0.0;           // (1/2n) sum e_i^2
    std::vector<double> errors;  // e_i = f(x_i) - y_i
};

inline LossResult loss(const Params& p, const Dataset& s, const Activation& act) {
    LossResult r;
    r.errors.resize(s.n);
    double acc = 0.0;
    for (std::size_t i = 0; i < s.n; ++i) {
        const double e = forward(p, s.X[i], act).output - s.y[i];
        r.errors[i] = e;
        acc += e * e;
    }
    r.risk = acc / (2.0 * static_cast<double>(s.n));
    return r;
}

struct GradientStack {
    std::vector<Matrix> dW;  // shapes match Params::W
    std::vector<double> da;  // length m
};

inline GradientStack gradients_from_tapes(const Params& p,
                                          const std::vector<SampleTape>& tapes) {
    const std::size_t L = p.W.size();
    const double inv_n = 1.0 / static_cast<double>(tapes.size());
    GradientStack g;
    g.dW.reserve(L);
    for (std::size_t l = 0; l < L; ++l) g.dW.emplace_back(p.W[l].rows, p.W[l].cols);
    g.da.assign(p.a.size(), 0.0);
    for (const SampleTape& t : tapes) {
        const double w = inv_n * t.error;
        for (std::size_t l = 0; l < L; ++l) {
            Matrix& dw = g.dW[l];
            const std::vector<double>& lam = t.lambda[l];
            const std::vector<double>& xin = t.x[l];
            for (std::size_t i = 0; i < dw.rows; ++i) {
                const double c = w * lam[i];
                double* row = dw.row(i);
                for (std::size_t j = 0; j < dw.cols; ++j) row[j] += c * xin[j];
            }
        }
        for (std::size_t k = 0; k < g.da.size(); ++k) g.da[k] += w * t.x[L][k];
    }
    return g;
}

// Positive gradient of the empirical risk; the flow applies the minus sign.
inline GradientStack gradients(const Params& p, const Dataset& s, const Activation& act) {
    std::vector<SampleTape> tapes;
    tapes.reserve(s.n);
    for (std::size_t i = 0; i < s.n; ++i) tapes.push_back(make_tape(p, s.X[i], s.y[i], act));
    return gradients_from_tapes(p, tapes);
}

// Total Gram matrix G(theta) = sum over parameter blocks of the pairwise
// gradient inner products <grad f(x_i), grad f(x_j)>, assembled from tapes.
inline Matrix total_gram_from_tapes(const std::vector<SampleTape>& tapes) {
    const std::size_t n = tapes.size();
    const std::size_t L = tapes.empty() ? 0 : tapes[0].lambda.size();
    Matrix g(n, n);
    auto dot = [](const std::vector<double>& u, const std::vector<double>& v) {
        double s = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * v[k];
        return s;
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t l = 0; l < L; ++l)
                acc += dot(tapes[i].lambda[l], tapes[j].lambda[l]) *
                       dot(tapes[i].x[l], tapes[j].x[l]);
            acc += dot(tapes[i].x[L], tapes[j].x[L]);
            g(i, j) = acc;
            g(j, i) = acc;
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Relative deviation per parameter block:
//   RD(W^[l]) = ||W^[l](t) - W^[l](0)||_F / ||W^[l](0)||_F,
//   RD(a)     = ||a(t) - a(0)||_2 / ||a(0)||_2.
// Identical for raw and normalized parameters (the scales cancel).
// ---------------------------------------------------------------------------

struct RdMetrics {
    std::vector<double> rd_w;  // L entries
    double rd_a = 0.0;
};

namespace detail {

inline double rel_deviation_vec(const std::vector<double>& cur,
                                const std::vector<double>& init, const char* what) {
    require(cur.size() == init.size(), std::string("rd_metrics: shape mismatch in ") + what);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < cur.size(); ++k) {
        const double d = cur[k] - init[k];
        num += d * d;
        den += init[k] * init[k];
    }
    if (den == 0.0)
        throw std::runtime_error(std::string("rd_metrics: zero-norm initial block ") + what);
    return std::sqrt(num) / std::sqrt(den);
}

}  // namespace detail

inline RdMetrics rd_metrics(const Params& current, const Params& initial) {
    detail::require(current.W.size() == initial.W.size(), "rd_metrics: layer count mismatch");
    RdMetrics r;
    r.rd_w.reserve(current.W.size());
    for (std::size_t l = 0; l < current.W.size(); ++l)
        r.rd_w.push_back(detail::rel_deviation_vec(current.W[l].data, initial.W[l].data,
                                                   ("W" + std::to_string(l + 1)).c_str()));
    r.rd_a = detail::rel_deviation_vec(current.a, initial.a, "a");
    return r;
}

inline RdMetrics rd_metrics(const NormalizedParams& current, const NormalizedParams& initial) {
    detail::require(current.Wbar_over_sqrtm.size() == initial.Wbar_over_sqrtm.size(),
                    "rd_metrics: layer count mismatch");
    RdMetrics r;
    for (std::size_t l = 0; l < current.Wbar_over_sqrtm.size(); ++l)
        r.rd_w.push_back(detail::rel_deviation_vec(current.Wbar_over_sqrtm[l].data,
                                                   initial.Wbar_over_sqrtm[l].data,
                                                   ("W" + std::to_string(l + 1)).c_str()));
    r.rd_a = detail::rel_deviation_vec(current.abar_over_sqrtm, initial.abar_over_sqrtm, "a");
    return r;
}

// ---------------------------------------------------------------------------
// Gradient-flow integration with monitors.
// ---------------------------------------------------------------------------

enum class Integrator { Euler, Rk4 };

struct FlowOptions {
    double dt = 1e-3;
    double T = 1e9;                  // time horizon
    std::size_t record_every = 1;    // steps between trace records
    double lambda_hat = 0.0;         // rate constant estimate; 0 disables bound checks
    Integrator integrator = Integrator::Euler;
    std::size_t monitor_every = 10;  // records between Gram/eig/p-norm evaluations
    double slack = 1e-3;             // relative slack absorbing integrator error
    double loss_floor_rel = 1e-10;   // stop when loss < floor * R(0)
    std::size_t max_steps = 2000000;
};

struct TrainTrace {
    std::vector<double> times;
    std::vector<double> loss;
    std::vector<double> min_eig_total_gram;       // NaN when not evaluated
    std::vector<std::vector<double>> p;           // running sup trackers, L+1 per record
    std::vector<std::vector<double>> rd;          // L+1 per record (W1..WL, a)
    std::vector<double> gram_drift_frobenius;
    std::vector<bool> bound_ok;                   // global decay bound at this time
    std::vector<bool> step_ok;                    // one-step decay inequality into this time
    std::optional<double> stopping_time;
    bool decay_bound_violated = false;
    bool step_bound_violated = false;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double drift_radius = 0.0;
    double rate = 0.0;  // decay exponent coefficient
    FlowOptions options;
};

namespace detail {

// warm-started power iteration for the p-trackers; the previous top vector is
// an excellent start along a slowly moving trajectory
class SpectralTracker {
  public:
    double estimate(const Matrix& w) {
        if (v_.size() != w.cols) {
            v_.assign(w.cols, 1.0 / std::sqrt(static_cast<double>(w.cols)));
        }
        double sigma = 0.0, last = -1.0;
        for (int it = 0; it < 400; ++it) {
            std::vector<double> y = matvec(w, v_);
            double ny = 0.0;
            for (double t : y) ny += t * t;
            ny = std::sqrt(ny);
            if (ny == 0.0) return 0.0;
            sigma = ny;
            v_ = matvec_transposed(w, y);
            double nv = 0.0;
            for (double t : v_) nv += t * t;
            nv = std::sqrt(nv);
            for (double& t : v_) t /= nv;
            if (last >= 0.0 && std::abs(sigma - last) <= 1e-8 * sigma) break;
            last = sigma;
        }
        return sigma;
    }

  private:
    std::vector<double> v_;
};

}  // namespace detail

inline TrainTrace integrate_flow(const Params& p0, const Dataset& s, const Activation& act,
                                 const ScalingConfig& cfg, const FlowOptions& opt,
                                 Params* final_params = nullptr) {
    detail::require(opt.dt > 0.0, "integrate_flow: dt must be positive");
    detail::require(opt.lambda_hat >= 0.0, "integrate_flow: lambda_hat must be >= 0");

    const std::size_t L = cfg.L;
    const double n = static_cast<double>(s.n);
    Params p = p0;
    TrainTrace tr;
    tr.options = opt;
    tr.drift_radius = cfg.rate_sum() * opt.lambda_hat / 4.0;
    tr.rate = cfg.rate_sum() * opt.lambda_hat / n;

    std::vector<detail::SpectralTracker> trackers(L);
    std::vector<double> p_sup(L + 1, 0.0);
    const double sqm = std::sqrt(static_cast<double>(cfg.m));

    auto vec_norm = [](const std::vector<double>& v) {
        double acc = 0.0;
        for (double t : v) acc += t * t;
        return std::sqrt(acc);
    };

    Matrix gram0;
    double R0 = 0.0;
    double prev_R = 0.0, prev_lam_min = 0.0;
    bool have_prev_lam = false;
    double t = 0.0;
    std::size_t records = 0;

    for (std::size_t step = 0; step < opt.max_steps; ++step) {
        std::vector<SampleTape> tapes;
        tapes.reserve(s.n);
        for (std::size_t i = 0; i < s.n; ++i)
            tapes.push_back(make_tape(p, s.X[i], s.y[i], act));
        double R = 0.0;
        for (const auto& tape : tapes) R += tape.error * tape.error;
        R /= 2.0 * n;
        if (!std::isfinite(R))
            throw std::runtime_error("integrate_flow: non-finite loss at t = " +
                                     std::to_string(t));
        if (step == 0) {
            R0 = R;
            tr.initial_loss = R0;
        }
        if (R > 10.0 * R0 && R0 > 0.0)
            throw std::runtime_error("integrate_flow: divergence, loss grew past 10x its "
                                     "start at t = " + std::to_string(t) +
                                     " (loss " + std::to_string(R) + ")");

        const bool record = (step % opt.record_every) == 0;
        if (record) {
            const bool monitor = (records % opt.monitor_every) == 0;
            double lam_min = std::numeric_limits<double>::quiet_NaN();
            double drift = std::numeric_limits<double>::quiet_NaN();
            Matrix gram = total_gram_from_tapes(tapes);
            if (gram0.rows == 0) gram0 = gram;
            drift = frobenius_distance(gram, gram0);
            if (monitor || opt.monitor_every == 1) {
                lam_min = symmetric_min_eigenvalue(gram, 1e-10).min_eigenvalue;
                for (std::size_t l = 0; l < L; ++l) {
                    const double on = trackers[l].estimate(p.W[l]) / (sqm * cfg.beta[l]);
                    p_sup[l] = std::max(p_sup[l], on);
                }
            }
            p_sup[L] = std::max(p_sup[L], vec_norm(p.a) / (sqm * cfg.beta[L]));

            RdMetrics rd = rd_metrics(p, p0);
            std::vector<double> rd_row = rd.rd_w;
            rd_row.push_back(rd.rd_a);

            bool ok_bound = true;
            if (opt.lambda_hat > 0.0 && R0 > 0.0)
                ok_bound = R <= std::exp(-tr.rate * t) * R0 * (1.0 + opt.slack);
            bool ok_step = true;
            if (have_prev_lam && R0 > 0.0)
                ok_step = R <= prev_R * std::exp(-opt.dt * 2.0 / n * prev_lam_min) *
                                   (1.0 + opt.slack);
            if (std::isfinite(lam_min)) {
                prev_lam_min = lam_min;
                prev_R = R;
                have_prev_lam = true;
            } else {
                have_prev_lam = false;
            }

            tr.times.push_back(t);
            tr.loss.push_back(R);
            tr.min_eig_total_gram.push_back(lam_min);
            tr.p.push_back(p_sup);
            tr.rd.push_back(rd_row);
            tr.gram_drift_frobenius.push_back(drift);
            tr.bound_ok.push_back(ok_bound);
            tr.step_ok.push_back(ok_step);
            if (!ok_bound) tr.decay_bound_violated = true;
            if (!ok_step) tr.step_bound_violated = true;
            if (!tr.stopping_time && tr.drift_radius > 0.0 && drift > tr.drift_radius)
                tr.stopping_time = t;
            ++records;
        }

        tr.final_loss = R;
        if (R0 == 0.0 || R < opt.loss_floor_rel * R0 || t >= opt.T) break;

        if (opt.integrator == Integrator::Euler) {
            GradientStack g = gradients_from_tapes(p, tapes);
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t k = 0; k < p.W[l].data.size(); ++k)
                    p.W[l].data[k] -= opt.dt * g.dW[l].data[k];
            for (std::size_t k = 0; k < p.a.size(); ++k) p.a[k] -= opt.dt * g.da[k];
        } else {
            // classic RK4 on theta' = -grad R(theta)
            auto eval = [&](const Params& q) {
                std::vector<SampleTape> tt;
                tt.reserve(s.n);
                for (std::size_t i = 0; i < s.n; ++i)
                    tt.push_back(make_tape(q, s.X[i], s.y[i], act));
                return gradients_from_tapes(q, tt);
            };
            auto shifted = [&](const GradientStack& g, double h) {
                Params q = p;
                for (std::size_t l = 0; l < L; ++l)
                    for (std::size_t k = 0; k < q.W[l].data.size(); ++k)
                        q.W[l].data[k] -= h * g.dW[l].data[k];
                for (std::size_t k = 0; k < q.a.size(); ++k) q.a[k] -= h * g.da[k];
                return q;
            };
            GradientStack k1 = gradients_from_tapes(p, tapes);
            GradientStack k2 = eval(shifted(k1, opt.dt / 2.0));
            GradientStack k3 = eval(shifted(k2, opt.dt / 2.0));
            GradientStack k4 = eval(shifted(k3, opt.dt));
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t k = 0; k < p.W[l].data.size(); ++k)
                    p.W[l].data[k] -= opt.dt / 6.0 *
                                      (k1.dW[l].data[k] + 2.0 * k2.dW[l].data[k] +
                                       2.0 * k3.dW[l].data[k] + k4.dW[l].data[k]);
            for (std::size_t k = 0; k < p.a.size(); ++k)
                p.a[k] -= opt.dt / 6.0 *
                          (k1.da[k] + 2.0 * k2.da[k] + 2.0 * k3.da[k] + k4.da[k]);
        }
        t += opt.dt;
    }
    if (final_params) *final_params = std::move(p);
    return tr;
}

// Trace export: CSV with a comment header recording the integration policy.
inline void save_trace(const TrainTrace& tr, std::size_t L, std::ostream& os) {
    os << "# dt=" << detail::fmt_double(tr.options.dt)
       << " integrator=" << (tr.options.integrator == Integrator::Euler ? "euler" : "rk4")
       << " lambda_hat=" << detail::fmt_double(tr.options.lambda_hat)
       << " slack=" << detail::fmt_double(tr.options.slack)
       << " drift_radius=" << detail::fmt_double(tr.drift_radius)
       << " rate=" << detail::fmt_double(tr.rate) << "\n";
    os << "t,loss,min_eig,drift";
    for (std::size_t l = 1; l <= L; ++l) os << ",rd_W" << l;
    os << ",rd_a";
    for (std::size_t l = 1; l <= L + 1; ++l) os << ",p_" << l;
    os << ",bound_ok\n";
    for (std::size_t r = 0; r < tr.times.size(); ++r) {
        os << detail::fmt_double(tr.times[r]) << ',' << detail::fmt_double(tr.loss[r]) << ','
           << detail::fmt_double(tr.min_eig_total_gram[r]) << ','
           << detail::fmt_double(tr.gram_drift_frobenius[r]);
        for (double v : tr.rd[r]) os << ',' << detail::fmt_double(v);
        for (double v : tr.p[r]) os << ',' << detail::fmt_double(v);
        os << ',' << (tr.bound_ok[r] ? 1 : 0) << '\n';
    }
}

}  // namespace lazylab
