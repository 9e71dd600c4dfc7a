#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lazylab/linalg.hpp"
#include "lazylab/rng.hpp"
#include "oracles.hpp"

using namespace lazylab;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    Matrix m(r, c);
    Rng rng(seed);
    for (double& x : m.data) x = rng.gaussian();
    return m;
}

Matrix random_symmetric(std::size_t n, std::uint64_t seed) {
    Matrix m = random_matrix(n, n, seed);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (m(i, j) + m(j, i));
            m(i, j) = v;
            m(j, i) = v;
        }
    return m;
}

// PSD as M^T M; PD adds a diagonal shift
Matrix random_psd(std::size_t n, std::uint64_t seed, double shift = 0.0) {
    Matrix m = random_matrix(n, n, seed);
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += m(k, i) * m(k, j);
            out(i, j) = s + (i == j ? shift : 0.0);
        }
    return out;
}

// Correlation-normalized PSD/PD matrix (unit diagonal), optionally rescaled.
// The Hadamard eigenvalue bound is a theorem on pairs with
// ||A o B||_F^2 <= n; scaling B by 1/sqrt(n) places random pairs inside
// that domain.
Matrix random_correlation(std::size_t n, std::uint64_t seed, double shift, double scale) {
    Matrix a = random_psd(n, seed, shift);
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = std::sqrt(a(i, i));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) *= scale / (d[i] * d[j]);
    return a;
}

}  // namespace

TEST_CASE("symmetric_min_eigenvalue on closed-form instances") {
    SECTION("identity") {
        auto rep = symmetric_min_eigenvalue(Matrix::identity(3));
        CHECK(rep.min_eigenvalue == Catch::Approx(1.0).margin(1e-12));
        CHECK(rep.max_eigenvalue == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("2x2 against the quadratic-root formula") {
        Matrix m(2, 2);
        m(0, 0) = 2.0; m(0, 1) = 1.0; m(1, 0) = 1.0; m(1, 1) = 2.0;
        // eigenvalues of [[a,b],[b,c]]: (a+c)/2 -+ sqrt(((a-c)/2)^2 + b^2)
        const double mid = 2.0, rad = 1.0;
        auto rep = symmetric_min_eigenvalue(m);
        CHECK(rep.min_eigenvalue == Catch::Approx(mid - rad).margin(1e-12));
        CHECK(rep.max_eigenvalue == Catch::Approx(mid + rad).margin(1e-12));
    }
    SECTION("diagonal") {
        Matrix m(3, 3);
        m(0, 0) = 3.0; m(1, 1) = 5.0; m(2, 2) = 7.0;
        CHECK(symmetric_min_eigenvalue(m).min_eigenvalue == Catch::Approx(3.0).margin(1e-12));
    }
}

TEST_CASE("eigenvalue sum reproduces the trace") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const std::size_t n = 2 + seed % 5 * 3;
        Matrix m = random_symmetric(n, 100 + seed);
        double trace = 0.0;
        for (std::size_t i = 0; i < n; ++i) trace += m(i, i);
        double sum = 0.0;
        for (double v : symmetric_eigenvalues(m)) sum += v;
        CHECK(sum == Catch::Approx(trace).epsilon(1e-10).margin(1e-10));
    }
}

TEST_CASE("symmetric eigensolver contract violations") {
    CHECK_THROWS_AS(symmetric_min_eigenvalue(Matrix(2, 3)), std::invalid_argument);
    Matrix m(2, 2);
    m(0, 1) = 1.0;  // m(1,0) stays 0
    CHECK_THROWS_AS(symmetric_min_eigenvalue(m), std::invalid_argument);
}

TEST_CASE("operator_norm") {
    SECTION("identity") {
        CHECK(operator_norm(Matrix::identity(4)) == Catch::Approx(1.0).epsilon(1e-10));
    }
    SECTION("zero matrix") { CHECK(operator_norm(Matrix(3, 3)) == 0.0); }
    SECTION("rank one outer product") {
        const std::vector<double> u = {1.0, -2.0, 3.0};
        const std::vector<double> v = {0.5, 4.0};
        Matrix m(3, 2);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 2; ++j) m(i, j) = u[i] * v[j];
        const double expect = std::sqrt(1 + 4 + 9) * std::sqrt(0.25 + 16);
        CHECK(operator_norm(m) == Catch::Approx(expect).epsilon(1e-9));
    }
    SECTION("start vector orthogonal to the top singular direction") {
        // M maps ones to zero; the perturbation retry must rescue the iteration
        Matrix m(2, 2);
        m(0, 0) = 1.0; m(0, 1) = -1.0; m(1, 0) = -1.0; m(1, 1) = 1.0;
        CHECK(operator_norm(m) == Catch::Approx(2.0).epsilon(1e-9));
    }
    SECTION("random 5x5 against the one-sided Jacobi SVD oracle") {
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            Matrix m = random_matrix(5, 5, 500 + seed);
            const double expect = oracle::jacobi_svd_singular_values(m).front();
            CHECK(operator_norm(m, 1e-12) == Catch::Approx(expect).epsilon(1e-8));
        }
    }
}

TEST_CASE("frobenius_norm basics") {
    CHECK(frobenius_norm(Matrix::identity(9)) == Catch::Approx(3.0));
    CHECK(frobenius_norm(Matrix(4, 7)) == 0.0);
    Matrix m(1, 2);
    m(0, 0) = 3.0; m(0, 1) = 4.0;
    CHECK(frobenius_norm(m) == Catch::Approx(5.0));
}

TEST_CASE("norm inequality chain") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const std::size_t r = 2 + seed % 4, c = 2 + (seed * 7) % 5;
        Matrix m = random_matrix(r, c, 900 + seed);
        const double op = operator_norm(m, 1e-12);
        const double fr = frobenius_norm(m);
        const double k = std::sqrt(static_cast<double>(std::min(r, c)));
        CHECK(op <= fr * (1 + 1e-12));
        CHECK(fr <= k * op * (1 + 1e-10));
    }
}

TEST_CASE("hadamard product") {
    Matrix a(2, 2);
    a(0, 0) = 1; a(0, 1) = 2; a(1, 0) = 3; a(1, 1) = 4;
    Matrix b(2, 2);
    b(0, 0) = 5; b(0, 1) = 6; b(1, 0) = 7; b(1, 1) = 8;
    SECTION("direct definition") {
        Matrix c = hadamard(a, b);
        CHECK(c(0, 0) == 5.0);
        CHECK(c(0, 1) == 12.0);
        CHECK(c(1, 0) == 21.0);
        CHECK(c(1, 1) == 32.0);
    }
    SECTION("ones is the identity element, zeros absorb") {
        Matrix ones(2, 2, 1.0), zeros(2, 2, 0.0);
        CHECK(hadamard(a, ones).data == a.data);
        CHECK(hadamard(a, zeros).data == zeros.data);
    }
    SECTION("commutative exactly, associative to rounding") {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            Matrix x = random_matrix(3, 4, seed);
            Matrix y = random_matrix(3, 4, 50 + seed);
            Matrix z = random_matrix(3, 4, 99 + seed);
            CHECK(hadamard(x, y).data == hadamard(y, x).data);
            // IEEE multiplication is commutative but not associative; the two
            // association orders may differ in the final ulp
            Matrix lhs = hadamard(hadamard(x, y), z);
            Matrix rhs = hadamard(x, hadamard(y, z));
            for (std::size_t k = 0; k < lhs.data.size(); ++k)
                CHECK(lhs.data[k] == Catch::Approx(rhs.data[k]).epsilon(1e-15).margin(1e-300));
        }
    }
    SECTION("shape mismatch throws") {
        CHECK_THROWS_AS(hadamard(Matrix(2, 2), Matrix(2, 3)), std::invalid_argument);
    }
}

TEST_CASE("hadamard_min_eig_bound") {
    SECTION("n = 1 prefactor convention") {
        Matrix a(1, 1), b(1, 1);
        a(0, 0) = 2.0;
        b(0, 0) = 3.0;
        CHECK(hadamard_min_eig_bound(a, b) == Catch::Approx(6.0));
    }
    SECTION("identity pair") {
        CHECK(hadamard_min_eig_bound(Matrix::identity(2), Matrix::identity(2)) ==
              Catch::Approx(std::sqrt(0.5)));
    }
    SECTION("bounds the least eigenvalue on 200 random PSD x PD pairs") {
        for (std::uint64_t trial = 0; trial < 200; ++trial) {
            const std::size_t n = 1 + trial % 6;
            const double scale = 1.0 / std::sqrt(static_cast<double>(n));
            Matrix a = random_correlation(n, 2 * trial, 0.0, 1.0);
            Matrix b = random_correlation(n, 2 * trial + 1, 0.3, scale);
            const double bound = hadamard_min_eig_bound(a, b);
            const double lmin =
                symmetric_min_eigenvalue(hadamard(a, b), 1e-12).min_eigenvalue;
            CHECK(bound <= lmin + 1e-10);
        }
    }
    SECTION("non-PD second argument throws") {
        Matrix a = Matrix::identity(2);
        Matrix b(2, 2);
        b(0, 0) = 1.0; b(0, 1) = 2.0; b(1, 0) = 2.0; b(1, 1) = 1.0;  // eigenvalues -1, 3
        CHECK_THROWS_AS(hadamard_min_eig_bound(a, b), std::runtime_error);
    }
}

TEST_CASE("lanczos spectral norm matches power iteration") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        Matrix m = random_matrix(40 + 10 * seed, 30 + 5 * seed, 7000 + seed);
        const double pw = operator_norm(m, 1e-12);
        const double lz = spectral_norm_lanczos(m, 30);
        CHECK(lz == Catch::Approx(pw).epsilon(1e-8));
    }
}
