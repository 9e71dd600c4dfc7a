#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace lazylab {

// Smooth activations with value, first and second derivative, and declared
// derivative tail limits a = lim_{x->-inf} sigma'(x), b = lim_{x->+inf}.
// The two shipped activations satisfy sigma(0) = 0, sigma'(0) = 1, bounded
// first/second derivatives, and a != b.  User-supplied records are accepted
// anywhere an Activation is; validate_assumption1 is the checking tool.

struct Activation {
    std::string id;
    double a = 0.0;           // left derivative limit
    double b = 0.0;           // right derivative limit
    double lipschitz_c = 0.0; // empirical bound on |sigma'| and |sigma''|
    double (*f0)(double) = nullptr;
    double (*f1)(double) = nullptr;
    double (*f2)(double) = nullptr;

    double eval(int derivative_order, double x) const {
        switch (derivative_order) {
            case 0: return f0(x);
            case 1: return f1(x);
            case 2: return f2(x);
            default: throw std::invalid_argument("Activation::eval: order must be 0, 1 or 2");
        }
    }
    double operator()(double x) const { return f0(x); }
};

namespace detail {

// logistic, saturated for |x| > 30 where exp(-30) ~ 9e-14 is below the
// 1e-12 accuracy target
inline double logistic(double x) {
    if (x > 30.0) return 1.0;
    if (x < -30.0) return std::exp(x);  // still exact to double precision
    return 1.0 / (1.0 + std::exp(-x));
}

inline double silu_f0(double x) {
    if (x < -30.0) return 2.0 * x * std::exp(x);
    return 2.0 * x * logistic(x);
}
inline double silu_f1(double x) {
    const double s = logistic(x);
    return 2.0 * s + 2.0 * x * s * (1.0 - s);
}
inline double silu_f2(double x) {
    const double s = logistic(x);
    const double sp = s * (1.0 - s);
    return 4.0 * sp + 2.0 * x * sp * (1.0 - 2.0 * s);
}

inline double softplus_f0(double x) {
    // 2(log(1+e^x) - log 2), overflow-safe in both tails
    if (x > 30.0) return 2.0 * (x - std::log(2.0));
    return 2.0 * (std::log1p(std::exp(x)) - std::log(2.0));
}
inline double softplus_f1(double x) { return 2.0 * logistic(x); }
inline double softplus_f2(double x) {
    const double s = logistic(x);
    return 2.0 * s * (1.0 - s);
}

}  // namespace detail

// sigma(x) = 2x / (1 + e^{-x}), tails a = 0, b = 2
inline Activation scaled_silu() {
    return Activation{"scaled_silu", 0.0, 2.0, 2.3,
                      detail::silu_f0, detail::silu_f1, detail::silu_f2};
}

// sigma(x) = 2(log(1 + e^x) - log 2), tails a = 0, b = 2
inline Activation modified_softplus() {
    return Activation{"modified_softplus", 0.0, 2.0, 2.0,
                      detail::softplus_f0, detail::softplus_f1, detail::softplus_f2};
}

inline Activation activation_by_name(const std::string& name) {
    if (name == "scaled_silu") return scaled_silu();
    if (name == "modified_softplus") return modified_softplus();
    throw std::invalid_argument("unknown activation: " + name);
}

// ---------------------------------------------------------------------------
// Numerical validation of the smooth-activation contract.
// ---------------------------------------------------------------------------

struct Assumption1Report {
    double value_at_zero = 0.0;        // |sigma(0)|
    double slope_error_at_zero = 0.0;  // |sigma'(0) - 1|
    double max_first_derivative = 0.0;
    double max_second_derivative = 0.0;
    double tail_left = 0.0;   // sigma' at the left grid extreme
    double tail_right = 0.0;  // sigma' at the right grid extreme
    double tail_left_error = 0.0;   // |tail_left - a|
    double tail_right_error = 0.0;  // |tail_right - b|
    double max_fd_mismatch_d1 = 0.0;  // analytic sigma' vs central differences of sigma
    double max_fd_mismatch_d2 = 0.0;  // analytic sigma'' vs central differences of sigma'
    bool tails_distinct = false;      // declared a != b
    bool ok = false;
};

inline Assumption1Report validate_assumption1(const Activation& act,
                                              const std::vector<double>& grid,
                                              double fd_step = 1e-5) {
    if (grid.size() < 2)
        throw std::invalid_argument("validate_assumption1: grid too small");
    double lo = grid.front(), hi = grid.front();
    for (double x : grid) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (lo > -50.0 || hi < 50.0)
        throw std::invalid_argument("validate_assumption1: grid must span [-50, 50]");

    Assumption1Report r;
    r.value_at_zero = std::abs(act.eval(0, 0.0));
    r.slope_error_at_zero = std::abs(act.eval(1, 0.0) - 1.0);
    for (double x : grid) {
        r.max_first_derivative = std::max(r.max_first_derivative, std::abs(act.eval(1, x)));
        r.max_second_derivative = std::max(r.max_second_derivative, std::abs(act.eval(2, x)));
        const double fd1 = (act.eval(0, x + fd_step) - act.eval(0, x - fd_step)) / (2.0 * fd_step);
        const double fd2 = (act.eval(1, x + fd_step) - act.eval(1, x - fd_step)) / (2.0 * fd_step);
        r.max_fd_mismatch_d1 =
            std::max(r.max_fd_mismatch_d1, std::abs(fd1 - act.eval(1, x)) / (1.0 + std::abs(fd1)));
        r.max_fd_mismatch_d2 =
            std::max(r.max_fd_mismatch_d2, std::abs(fd2 - act.eval(2, x)) / (1.0 + std::abs(fd2)));
    }
    r.tail_left = act.eval(1, lo);
    r.tail_right = act.eval(1, hi);
    r.tail_left_error = std::abs(r.tail_left - act.a);
    r.tail_right_error = std::abs(r.tail_right - act.b);
    r.tails_distinct = act.a != act.b;
    r.ok = r.tails_distinct && r.value_at_zero < 1e-12 && r.slope_error_at_zero < 1e-12 &&
           r.max_fd_mismatch_d1 < 1e-6 && r.max_fd_mismatch_d2 < 1e-6 &&
           r.tail_left_error < 1e-6 && r.tail_right_error < 1e-6;
    return r;
}

}  // namespace lazylab
