#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "lazylab/network.hpp"
#include "oracles.hpp"

using namespace lazylab;

TEST_CASE("make_scaling derived quantities") {
    SECTION("L=1, gamma=(1/2,1/2): boundary, not lazy") {
        auto cfg = make_scaling(1, 100, 3, {0.5, 0.5});
        CHECK(cfg.alpha[0] == Catch::Approx(1.0));
        CHECK(cfg.alpha[1] == Catch::Approx(1.0));
        CHECK(cfg.kappa == Catch::Approx(1.0));
        CHECK(cfg.laziness_exponent == Catch::Approx(0.0).margin(1e-15));
        CHECK_FALSE(cfg.theta_lazy);
    }
    SECTION("L=2, gamma=0: kappa = m^{3/2}") {
        auto cfg = make_scaling(2, 100, 3, {0.0, 0.0, 0.0});
        CHECK(cfg.kappa == Catch::Approx(1000.0));
        CHECK(cfg.laziness_exponent == Catch::Approx(1.5));
        CHECK(cfg.theta_lazy);
    }
    SECTION("L=2, gamma=(1/2,1/2,0): kappa = sqrt(m)") {
        auto cfg = make_scaling(2, 64, 3, {0.5, 0.5, 0.0});
        CHECK(cfg.kappa == Catch::Approx(8.0));
        CHECK(cfg.laziness_exponent == Catch::Approx(0.5));
    }
    SECTION("internal consistency of alpha, beta, eps") {
        auto cfg = make_scaling(3, 37, 5, {0.3, 0.1, 0.45, 0.2});
        const double sqm = std::sqrt(37.0);
        for (std::size_t l = 0; l <= 3; ++l)
            CHECK(cfg.alpha[l] == Catch::Approx(sqm * cfg.beta[l]).epsilon(1e-15));
        double prod = 1.0;
        for (std::size_t l = 1; l <= 3; ++l) {
            prod *= cfg.alpha[l - 1];
            CHECK(cfg.eps[l - 1] * sqm == Catch::Approx(prod).epsilon(1e-13));
            CHECK(cfg.eps[l - 1] > 0.0);
        }
    }
    SECTION("bad gamma length rejected") {
        CHECK_THROWS_AS(make_scaling(2, 8, 3, {0.5, 0.5}), std::invalid_argument);
    }
}

TEST_CASE("init_params statistics and determinism") {
    SECTION("sample variance of the first layer tracks beta_1^2") {
        auto cfg = make_scaling(1, 4096, 64, {0.3, 0.1});
        Params p = init_params(cfg, 7);
        double sum = 0.0, sumsq = 0.0;
        const double count = static_cast<double>(p.W[0].data.size());
        for (double x : p.W[0].data) {
            sum += x;
            sumsq += x * x;
        }
        const double var = sumsq / count - (sum / count) * (sum / count);
        CHECK(var == Catch::Approx(cfg.beta[0] * cfg.beta[0]).epsilon(0.05));
    }
    SECTION("identical seeds give bit-identical draws") {
        auto cfg = make_scaling(2, 32, 5, {0.5, 0.2, 0.0});
        Params p1 = init_params(cfg, 99);
        Params p2 = init_params(cfg, 99);
        CHECK(p1.a == p2.a);
        for (std::size_t l = 0; l < 2; ++l) CHECK(p1.W[l].data == p2.W[l].data);
        Params p3 = init_params(cfg, 100);
        CHECK(p1.a != p3.a);
    }
    SECTION("beta is always positive") {
        auto cfg = make_scaling(1, 1000000, 2, {3.0, -2.0});
        CHECK(cfg.beta[0] > 0.0);
        CHECK(cfg.beta[1] > 0.0);
    }
}

TEST_CASE("forward basics") {
    const Activation act = scaled_silu();
    SECTION("all-zero parameters give zero output") {
        auto cfg = make_scaling(2, 8, 3, {0.1, 0.1, 0.1});
        Params p;
        p.W = {Matrix(8, 3), Matrix(8, 8)};
        p.a.assign(8, 0.0);
        CHECK(forward(p, {1.0, -2.0, 0.5}, act).output == 0.0);
    }
    SECTION("single neuron reduces to sigma of the input sum") {
        Params p;
        p.W = {Matrix(1, 3, 1.0)};
        p.a = {1.0};
        const std::vector<double> x = {0.3, -1.2, 2.0};
        CHECK(forward(p, x, act).output ==
              Catch::Approx(act.f0(0.3 - 1.2 + 2.0)).epsilon(1e-15));
    }
}

TEST_CASE("scaling identities between raw and normalized forward") {
    const Activation act = scaled_silu();
    // f = kappa * fbar and x^[l] = prod(alpha) xbar^[l] across depths and scalings
    const struct {
        std::size_t L, m;
        std::vector<double> gamma;
    } cases[] = {
        {1, 16, {0.3, 0.1}},
        {2, 24, {0.5, 0.5, 0.0}},
        {3, 12, {0.2, 0.4, 0.1, 0.3}},
    };
    for (const auto& tc : cases) {
        auto cfg = make_scaling(tc.L, tc.m, 5, tc.gamma);
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
            Params p = init_params(cfg, seed);
            NormalizedParams np = normalize_params(p, cfg);
            Rng rng(derive_seed(seed, "input"));
            std::vector<double> x(5);
            for (double& v : x) v = rng.gaussian();
            auto raw = forward(p, x, act);
            auto bar = forward_normalized(np, x, cfg, act);
            CHECK(std::abs(raw.output - cfg.kappa * bar.output) <=
                  1e-9 * (1.0 + std::abs(raw.output)));
            for (std::size_t l = 0; l < tc.L; ++l) {
                const double scale = cfg.alpha_prefix(l + 1);
                for (std::size_t k = 0; k < raw.hiddens[l].size(); ++k)
                    CHECK(std::abs(raw.hiddens[l][k] - scale * bar.hiddens[l][k]) <=
                          1e-9 * (1.0 + std::abs(raw.hiddens[l][k])));
            }
        }
    }
}

TEST_CASE("canonical normalized forward equals the literal formula") {
    const Activation act = scaled_silu();
    auto cfg = make_scaling(3, 20, 4, {0.4, 0.15, 0.3, 0.05});
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Params p = init_params(cfg, 50 + seed);
        NormalizedParams np = normalize_params(p, cfg);
        Rng rng(derive_seed(seed, "input"));
        std::vector<double> x(4);
        for (double& v : x) v = rng.gaussian();
        auto canonical = forward_normalized(np, x, cfg, act);
        std::vector<std::vector<double>> lit_hiddens;
        const double literal = oracle::forward_normalized_literal(np, x, cfg, act, &lit_hiddens);
        CHECK(std::abs(canonical.output - literal) <= 1e-12 * (1.0 + std::abs(literal)));
        for (std::size_t l = 0; l < 3; ++l)
            for (std::size_t k = 0; k < lit_hiddens[l].size(); ++k)
                CHECK(std::abs(canonical.hiddens[l][k] - lit_hiddens[l][k]) <=
                      1e-12 * (1.0 + std::abs(lit_hiddens[l][k])));
    }
}

TEST_CASE("all alphas equal to one collapses the two forwards") {
    const Activation act = scaled_silu();
    auto cfg = make_scaling(2, 16, 4, {0.5, 0.5, 0.5});  // alpha_l = 1, kappa = 1
    CHECK(cfg.kappa == Catch::Approx(1.0));
    Params p = init_params(cfg, 3);
    NormalizedParams np = normalize_params(p, cfg);
    std::vector<double> x = {0.2, -0.4, 1.0, 0.7};
    CHECK(forward(p, x, act).output ==
          Catch::Approx(forward_normalized(np, x, cfg, act).output).epsilon(1e-12));
}

TEST_CASE("normalize then denormalize is the identity") {
    auto cfg = make_scaling(2, 10, 3, {0.25, 0.1, 0.6});
    Params p = init_params(cfg, 11);
    Params q = denormalize_params(normalize_params(p, cfg), cfg);
    for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t k = 0; k < p.W[l].data.size(); ++k)
            CHECK(q.W[l].data[k] == Catch::Approx(p.W[l].data[k]).epsilon(1e-15));
    for (std::size_t k = 0; k < p.a.size(); ++k)
        CHECK(q.a[k] == Catch::Approx(p.a[k]).epsilon(1e-15));
}

TEST_CASE("generate_dataset invariants") {
    SECTION("two points in the plane respect the cosine cap") {
        Dataset s = generate_dataset(2, 2, 1.0, 0.01, 5);
        double dot = 0.0;
        for (std::size_t k = 0; k < 2; ++k) dot += s.X[0][k] * s.X[1][k];
        CHECK(std::abs(dot) <= 1.0 - 0.01 + 1e-15);
    }
    SECTION("unit norms and label range") {
        Dataset s = generate_dataset(6, 5, 1.0, 0.01, 123);
        for (const auto& x : s.X) {
            double norm2 = 0.0;
            for (double v : x) norm2 += v * v;
            CHECK(std::sqrt(norm2) == Catch::Approx(1.0).margin(1e-12));
        }
        for (double y : s.y) {
            CHECK(y <= 1.0);
            CHECK(y >= -1.0);
        }
    }
    SECTION("pairwise cosines over many seeds") {
        for (std::uint64_t seed = 0; seed < 10000; ++seed) {
            Dataset s = generate_dataset(4, 6, 1.0, 0.01, seed);
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = i + 1; j < 4; ++j) {
                    double dot = 0.0;
                    for (std::size_t k = 0; k < 6; ++k) dot += s.X[i][k] * s.X[j][k];
                    REQUIRE(std::abs(dot) <= 1.0 - 0.01 + 1e-15);
                }
        }
    }
    SECTION("impossible request exhausts the rejection budget") {
        // many points with a near-orthogonality requirement in the plane
        CHECK_THROWS_AS(generate_dataset(40, 2, 1.0, 0.9, 1), std::runtime_error);
    }
}

TEST_CASE("dataset and params round-trip through their text formats") {
    Dataset s = generate_dataset(5, 4, 1.0, 0.01, 77);
    std::stringstream ds;
    save_dataset(s, ds);
    Dataset s2 = load_dataset(ds);
    REQUIRE(s2.n == s.n);
    REQUIRE(s2.d == s.d);
    for (std::size_t i = 0; i < s.n; ++i) {
        CHECK(s2.y[i] == s.y[i]);
        for (std::size_t k = 0; k < s.d; ++k) CHECK(s2.X[i][k] == s.X[i][k]);
    }

    auto cfg = make_scaling(2, 6, 4, {0.2, 0.4, 0.1});
    Params p = init_params(cfg, 9);
    std::stringstream ps;
    save_params(p, ps);
    Params p2 = load_params(ps);
    for (std::size_t l = 0; l < 2; ++l) CHECK(p2.W[l].data == p.W[l].data);
    CHECK(p2.a == p.a);
}
