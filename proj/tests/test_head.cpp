#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "head.hpp"
#include "oracles.hpp"
#include "rng.hpp"

using namespace convflat;

namespace {

ConvSpec ramp_spec(int c_out = 2) {
    ConvSpec s;
    s.c_in = 1;
    s.c_out = c_out;
    s.k_h = s.k_w = 2;
    s.stride = 1;
    s.padding = 0;
    s.h = s.w = 3;
    return s;
}

std::vector<Tensor3> ramp_batch() {
    return {Tensor3(1, 3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9})};
}

struct RandomInstance {
    ConvSpec spec;
    std::vector<PatchSummary> summaries;
    KernelBank kernels{1, 1};
    OneHot labels;
};

RandomInstance random_instance(Rng& rng, int c_out, int batch) {
    RandomInstance inst;
    inst.spec = ConvSpec{3, c_out, 3, 3, 1, 0, 10, 10};
    std::vector<Tensor3> xs;
    for (int b = 0; b < batch; ++b) {
        Tensor3 x(3, 10, 10);
        for (double& v : x.data()) v = rng.uniform01();
        xs.push_back(std::move(x));
    }
    inst.summaries = summarize_batch(xs, inst.spec);
    inst.kernels = KernelBank::uniform(c_out, inst.spec.flat_dim(), -0.5, 0.5, rng.next_u64());
    std::vector<int> labels(batch);
    for (int& l : labels) l = static_cast<int>(rng.uniform_int(c_out));
    inst.labels = OneHot::from_indices(labels, c_out);
    return inst;
}

} // namespace

TEST_CASE("identical filters give the uniform softmax and ln 2 loss") {
    const KernelBank k = KernelBank::ones(2, 4);
    const OneHot y = OneHot::from_indices({0}, 2);
    const HeadOutput out = forward(ramp_batch(), ramp_spec(), k, y);
    CHECK(out.probs[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(out.probs[1] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(out.mean_loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("logits (ln 3, 0) give probabilities (0.75, 0.25)") {
    ConvSpec s;
    s.c_in = 1;
    s.c_out = 2;
    s.k_h = s.k_w = 1;
    s.h = s.w = 1;
    KernelBank k(2, 1);
    k.row(0)[0] = std::log(3.0);
    k.row(1)[0] = 0.0;
    const std::vector<Tensor3> xs{Tensor3(1, 1, 1, {1.0})};
    const HeadOutput out = forward(xs, s, k, OneHot::from_indices({0}, 2));
    CHECK(out.probs[0] == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(out.probs[1] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("ramp with ones and zeros kernels") {
    KernelBank k(2, 4);
    for (int i = 0; i < 4; ++i) k.row(0)[i] = 1.0;
    const HeadOutput out = forward(ramp_batch(), ramp_spec(), k, OneHot::from_indices({0}, 2));
    CHECK(out.logits[0] == doctest::Approx(20.0).epsilon(1e-14));
    CHECK(out.logits[1] == doctest::Approx(0.0));
    CHECK(out.probs[0] == doctest::Approx(1.0 / (1.0 + std::exp(-20.0))).epsilon(1e-14));
}

TEST_CASE("saturated prediction has zero gradient") {
    ConvSpec s;
    s.c_in = 1;
    s.c_out = 2;
    s.k_h = s.k_w = 1;
    s.h = s.w = 1;
    KernelBank k(2, 1);
    k.row(0)[0] = 800.0;
    const std::vector<Tensor3> xs{Tensor3(1, 1, 1, {1.0})};
    const OneHot y = OneHot::from_indices({0}, 2);
    const auto summaries = summarize_batch(xs, s);
    const HeadOutput out = forward(summaries, k, y);
    for (double g : gradient(out, summaries, y)) CHECK(g == 0.0);
}

TEST_CASE("closed-form gradient on the ramp example") {
    const KernelBank k = KernelBank::ones(2, 4);
    const OneHot y = OneHot::from_indices({0}, 2);
    const auto summaries = summarize_batch(ramp_batch(), ramp_spec());
    const HeadOutput out = forward(summaries, k, y);
    const auto g = gradient(out, summaries, y);
    const double expected[8] = {-1.5, -2, -3, -3.5, 1.5, 2, 3, 3.5};
    for (int i = 0; i < 8; ++i) CHECK(g[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("gradient matches central differences on random instances") {
    Rng rng(123);
    for (int trial = 0; trial < 8; ++trial) {
        const int c_out = 2 + static_cast<int>(rng.uniform_int(4)); // c_out * d <= 200 wants c_out <= 7
        const auto inst = random_instance(rng, c_out, 3);
        const HeadOutput out = forward(inst.summaries, inst.kernels, inst.labels);
        const auto analytic = gradient(out, inst.summaries, inst.labels);
        const auto numeric = fd_gradient(
            [&](const KernelBank& k) { return forward(inst.summaries, k, inst.labels).mean_loss; },
            inst.kernels);

        double max_mag = 0;
        for (double v : numeric) max_mag = std::max(max_mag, std::fabs(v));
        const double scale = std::max(max_mag, 1.0);
        for (std::size_t i = 0; i < analytic.size(); ++i)
            CHECK(std::fabs(analytic[i] - numeric[i]) / scale < 1e-6);
    }
}

TEST_CASE("logit hessian worked examples") {
    {
        const double p[2] = {0.5, 0.5};
        const auto h = logit_hessian({p, 2});
        CHECK(h[0] == doctest::Approx(0.25));
        CHECK(h[1] == doctest::Approx(-0.25));
        CHECK(h[2] == doctest::Approx(-0.25));
        CHECK(h[3] == doctest::Approx(0.25));
    }
    {
        const double p[2] = {1.0, 0.0};
        for (double v : logit_hessian({p, 2})) CHECK(v == 0.0);
    }
    {
        const double p[2] = {0.75, 0.25};
        const auto h = logit_hessian({p, 2});
        CHECK(h[0] == doctest::Approx(0.1875).epsilon(1e-14));
        CHECK(h[1] == doctest::Approx(-0.1875).epsilon(1e-14));
    }
}

TEST_CASE("logit hessian rows sum to zero and is PSD") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(8));
        std::vector<double> p(n);
        double sum = 0;
        for (double& v : p) sum += v = rng.uniform01() + 1e-3;
        for (double& v : p) v /= sum;

        const auto h = logit_hessian({p.data(), p.size()});
        for (int j = 0; j < n; ++j) {
            double row = 0;
            for (int l = 0; l < n; ++l) row += h[static_cast<std::size_t>(j) * n + l];
            CHECK(std::fabs(row) < 1e-14);
        }

        Eigen::MatrixXd m(n, n);
        for (int j = 0; j < n; ++j)
            for (int l = 0; l < n; ++l) m(j, l) = h[static_cast<std::size_t>(j) * n + l];
        const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues();
        CHECK(ev.minCoeff() >= -1e-12);
    }
}

TEST_CASE("shifting every logit by a constant changes nothing") {
    Rng rng(99);
    const auto inst = random_instance(rng, 4, 2);
    const HeadOutput base = forward(inst.summaries, inst.kernels, inst.labels);
    const auto g_base = gradient(base, inst.summaries, inst.labels);

    // k'_j = k_j + c * u with <phi, u> = 1 shifts every logit by c
    const double phi0 = inst.summaries[0].avg[0];
    REQUIRE(phi0 != 0.0);
    // all samples must shift equally, so pick a direction aligned with a
    // shared component: use sample 0's first component and verify on a
    // single-sample batch instead
    const std::vector<PatchSummary> single{inst.summaries[0]};
    const OneHot y1 = OneHot::from_indices({inst.labels.index_of(0)}, inst.kernels.c_out());
    const HeadOutput one = forward(single, inst.kernels, y1);

    KernelBank shifted = inst.kernels;
    const double c = 3.7;
    for (int j = 0; j < shifted.c_out(); ++j) shifted.row(j)[0] += c / phi0;
    const HeadOutput moved = forward(single, shifted, y1);

    for (int j = 0; j < one.c_out; ++j) {
        CHECK(moved.logits[j] == doctest::Approx(one.logits[j] + c).epsilon(1e-12));
        CHECK(moved.probs[j] == doctest::Approx(one.probs[j]).epsilon(1e-12));
    }
    CHECK(moved.mean_loss == doctest::Approx(one.mean_loss).epsilon(1e-12));

    const auto g1 = gradient(one, single, y1);
    const auto g2 = gradient(moved, single, y1);
    for (std::size_t i = 0; i < g1.size(); ++i)
        CHECK(g2[i] == doctest::Approx(g1[i]).epsilon(1e-10));
    (void)g_base;
}

TEST_CASE("probability rows are normalized") {
    Rng rng(17);
    const auto inst = random_instance(rng, 6, 4);
    const HeadOutput out = forward(inst.summaries, inst.kernels, inst.labels);
    for (int b = 0; b < out.batch; ++b) {
        double sum = 0;
        for (int j = 0; j < out.c_out; ++j) {
            const double p = out.prob_row(b)[j];
            CHECK(p > 0.0);
            CHECK(p < 1.0);
            sum += p;
        }
        CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
    CHECK(out.mean_loss >= 0.0);
}

TEST_CASE("label validation") {
    OneHot bad;
    bad.batch = 1;
    bad.classes = 2;
    bad.rows = {0.5, 0.5};
    CHECK_THROWS_AS(bad.validate(), validation_error);
    bad.rows = {1.0, 1.0};
    CHECK_THROWS_AS(bad.validate(), validation_error);
    bad.rows = {0.0, 0.0};
    CHECK_THROWS_AS(bad.validate(), validation_error);
    CHECK_THROWS_AS(OneHot::from_indices({2}, 2), validation_error);

    const KernelBank k = KernelBank::ones(2, 4);
    OneHot mismatched = OneHot::from_indices({0, 1}, 2);
    CHECK_THROWS_AS(forward(ramp_batch(), ramp_spec(), k, mismatched), validation_error);
}
