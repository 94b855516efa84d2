#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rng.hpp"
#include "stats.hpp"

using namespace convflat;

TEST_CASE("incomplete beta basics") {
    for (double x : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0})
        CHECK(regularized_incomplete_beta(1, 1, x) == doctest::Approx(x).epsilon(1e-13));
    for (double x : {0.2, 0.6}) {
        const double a = 2.3, b = 4.7;
        CHECK(regularized_incomplete_beta(a, b, x) +
                  regularized_incomplete_beta(b, a, 1 - x) ==
              doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(regularized_incomplete_beta(0, 1, 0.5), validation_error);
}

TEST_CASE("student t cdf reference points") {
    CHECK(student_t_cdf(0.0, 5.0) == doctest::Approx(0.5).epsilon(1e-14));
    // published 97.5% quantiles
    CHECK(student_t_cdf(2.228138852, 10.0) == doctest::Approx(0.975).epsilon(1e-8));
    CHECK(student_t_cdf(1.983971519, 100.0) == doctest::Approx(0.975).epsilon(1e-8));
    CHECK(student_t_cdf(-2.228138852, 10.0) == doctest::Approx(0.025).epsilon(1e-7));
    // wide-df limit approaches the normal
    CHECK(student_t_cdf(1.0, 1e7) == doctest::Approx(normal_cdf(1.0)).epsilon(1e-6));
}

TEST_CASE("average ranks break ties by averaging") {
    const std::vector<double> xs{10, 20, 20, 30};
    const auto r = average_ranks(xs);
    CHECK(r[0] == 1.0);
    CHECK(r[1] == 2.5);
    CHECK(r[2] == 2.5);
    CHECK(r[3] == 4.0);
}

TEST_CASE("perfect linear relation") {
    std::vector<double> x{1, 2, 3, 4, 5, 6}, y;
    for (double v : x) y.push_back(2 * v + 1);
    const CorrelationStats s = correlate(x, y);
    CHECK(s.slope == doctest::Approx(2.0).epsilon(1e-13));
    CHECK(s.intercept == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.pearson_r == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(s.spearman_rho == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(s.r_squared == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(s.slope_p_value < 1e-10);
    CHECK(s.n == 6);
}

TEST_CASE("monotone but nonlinear data") {
    const std::vector<double> x{1, 2, 3, 4};
    const std::vector<double> y{1, 4, 9, 16};
    const CorrelationStats s = correlate(x, y);
    CHECK(s.spearman_rho == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(s.pearson_r == doctest::Approx(25.0 / std::sqrt(645.0)).epsilon(1e-12));
    CHECK(s.pearson_r == doctest::Approx(0.9843).epsilon(1e-4));
    CHECK(s.r_squared == doctest::Approx(s.pearson_r * s.pearson_r).epsilon(1e-12));
    CHECK(s.pearson_ci_low <= s.pearson_r);
    CHECK(s.pearson_ci_high >= s.pearson_r);
}

TEST_CASE("spearman is invariant to positive affine rescaling of x") {
    Rng rng(10);
    std::vector<double> x(40), y(40);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.uniform(-5, 5);
        y[i] = 0.3 * x[i] + rng.normal();
    }
    const CorrelationStats base = correlate(x, y);
    std::vector<double> scaled = x;
    for (double& v : scaled) v = 7.5 * v + 3.0;
    const CorrelationStats moved = correlate(scaled, y);
    CHECK(moved.spearman_rho == doctest::Approx(base.spearman_rho).epsilon(1e-12));
    CHECK(moved.pearson_r == doctest::Approx(base.pearson_r).epsilon(1e-10));
}

TEST_CASE("degenerate inputs are rejected") {
    const std::vector<double> constant(5, 1.0), ramp{1, 2, 3, 4, 5};
    CHECK_THROWS_AS(correlate(constant, ramp), validation_error);
    CHECK_THROWS_AS(correlate(ramp, constant), validation_error);
    const std::vector<double> two{1, 2};
    CHECK_THROWS_AS(correlate(two, two), validation_error);
    const std::vector<double> withnan{1, std::nan(""), 3, 4, 5};
    CHECK_THROWS_AS(correlate(ramp, withnan), validation_error);
}

TEST_CASE("independent columns look uncorrelated") {
    int pass = 0;
    const int fixtures = 60;
    for (int f = 0; f < fixtures; ++f) {
        Rng rng(derive_seed(777, f));
        std::vector<double> x(1000), y(1000);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = rng.normal();
            y[i] = rng.normal();
        }
        const CorrelationStats s = correlate(x, y);
        if (std::fabs(s.pearson_r) < 0.1 && s.pearson_p_value > 0.01) ++pass;
    }
    CHECK(pass >= fixtures * 95 / 100);
}

TEST_CASE("large n uses the documented normal switch and stays sane") {
    Rng rng(20);
    std::vector<double> x(500), y(500);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.normal();
        y[i] = 0.5 * x[i] + rng.normal();
    }
    const CorrelationStats s = correlate(x, y);
    CHECK(s.pearson_p_value > 0.0);
    CHECK(s.pearson_p_value < 1e-6);
    CHECK(s.spearman_p_value < 1e-6);
    CHECK(s.pearson_ci_low > 0.0);
}
