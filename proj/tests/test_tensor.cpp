#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "head.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace convflat;

namespace {

Tensor3 ramp3x3() {
    return Tensor3(1, 3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9});
}

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

} // namespace

TEST_CASE("ramp input produces the four enumerated patches") {
    const PatchMatrix p = extract_patches(ramp3x3(), ramp_spec());
    REQUIRE(p.rows == 4);
    REQUIRE(p.patch_dim == 4);
    const double expected[4][4] = {{1, 2, 4, 5}, {2, 3, 5, 6}, {4, 5, 7, 8}, {5, 6, 8, 9}};
    for (int r = 0; r < 4; ++r)
        for (int i = 0; i < 4; ++i) CHECK(p.patch(0, r)[i] == expected[r][i]);
}

TEST_CASE("zero input gives zero patches") {
    const Tensor3 x(1, 3, 3);
    const PatchMatrix p = extract_patches(x, ramp_spec());
    for (double v : p.values) CHECK(v == 0.0);
}

TEST_CASE("channels stay separate") {
    ConvSpec s = ramp_spec();
    s.c_in = 2;
    const Tensor3 ramp = ramp3x3();
    std::vector<double> data;
    for (double v : ramp.data()) data.push_back(v);
    for (double v : ramp.data()) data.push_back(v + 100.0);
    const Tensor3 x(2, 3, 3, data);
    const PatchMatrix p = extract_patches(x, s);
    REQUIRE(p.c_in == 2);
    for (int r = 0; r < p.rows; ++r)
        for (int i = 0; i < p.patch_dim; ++i) {
            CHECK(p.patch(0, r)[i] < 100.0);
            CHECK(p.patch(1, r)[i] > 100.0);
            CHECK(p.patch(1, r)[i] == p.patch(0, r)[i] + 100.0);
        }
}

TEST_CASE("average patch of the ramp") {
    const PatchSummary s = average_patch(extract_patches(ramp3x3(), ramp_spec()));
    const double expected[4] = {3, 4, 6, 7};
    for (int i = 0; i < 4; ++i) CHECK(s.avg[i] == doctest::Approx(expected[i]).epsilon(1e-15));
    CHECK(s.sq_norm == doctest::Approx(110.0).epsilon(1e-15));
}

TEST_CASE("single patch average is the patch itself") {
    ConvSpec s;
    s.c_in = 1;
    s.k_h = s.k_w = 2;
    s.h = s.w = 2;
    const Tensor3 x(1, 2, 2, {1, 2, 3, 4});
    const PatchSummary sum = average_patch(extract_patches(x, s));
    const double expected[4] = {1, 2, 3, 4};
    for (int i = 0; i < 4; ++i) CHECK(sum.avg[i] == expected[i]);
}

TEST_CASE("constant input average") {
    ConvSpec s;
    s.c_in = 1;
    s.k_h = s.k_w = 3;
    s.h = s.w = 10;
    Tensor3 x(1, 10, 10);
    for (double& v : x.data()) v = 1.0;
    const PatchSummary sum = average_patch(extract_patches(x, s));
    for (double v : sum.avg) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(sum.sq_norm == doctest::Approx(9.0).epsilon(1e-14));
}

TEST_CASE("global average pool basics") {
    CHECK(global_average_pool({1, 2, 3, 4}, 4, 1)[0] == doctest::Approx(2.5));
    const std::vector<double> constant(12, 7.25);
    for (double v : global_average_pool(constant, 6, 2)) CHECK(v == doctest::Approx(7.25));
}

TEST_CASE("pooled conv output of the ramp with ones kernels is 20 per filter") {
    const ConvSpec s = ramp_spec();
    const PatchMatrix p = extract_patches(ramp3x3(), s);
    const KernelBank k = KernelBank::ones(2, 4);
    // Z = Phi K^T, row-major R x c_out
    std::vector<double> z(static_cast<std::size_t>(p.rows) * 2, 0.0);
    for (int r = 0; r < p.rows; ++r)
        for (int j = 0; j < 2; ++j) {
            double dot = 0;
            for (int i = 0; i < p.patch_dim; ++i) dot += p.patch(0, r)[i] * k.row(j)[i];
            z[static_cast<std::size_t>(r) * 2 + j] = dot;
        }
    const auto pooled = global_average_pool(z, p.rows, 2);
    CHECK(pooled[0] == doctest::Approx(20.0).epsilon(1e-15));
    CHECK(pooled[1] == doctest::Approx(20.0).epsilon(1e-15));
}

TEST_CASE("pooling the conv output equals the average-patch inner product") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        ConvSpec s;
        s.c_in = 1 + static_cast<int>(rng.uniform_int(3));
        s.c_out = 1 + static_cast<int>(rng.uniform_int(4));
        s.k_h = 1 + static_cast<int>(rng.uniform_int(3));
        s.k_w = 1 + static_cast<int>(rng.uniform_int(3));
        s.stride = 1 + static_cast<int>(rng.uniform_int(2));
        s.padding = static_cast<int>(rng.uniform_int(2));
        s.h = s.k_h + 2 + static_cast<int>(rng.uniform_int(5));
        s.w = s.k_w + 2 + static_cast<int>(rng.uniform_int(5));

        Tensor3 x(s.c_in, s.h, s.w);
        for (double& v : x.data()) v = rng.uniform(-1, 1);
        KernelBank k = KernelBank::uniform(s.c_out, s.flat_dim(), -1, 1, rng.next_u64());

        const PatchMatrix p = extract_patches(x, s);
        const PatchSummary sum = average_patch(p);

        // conv forward then pool
        std::vector<double> z(static_cast<std::size_t>(p.rows) * s.c_out, 0.0);
        for (int r = 0; r < p.rows; ++r)
            for (int j = 0; j < s.c_out; ++j) {
                double dot = 0;
                for (int c = 0; c < s.c_in; ++c)
                    for (int i = 0; i < p.patch_dim; ++i)
                        dot += p.patch(c, r)[i] * k.row(j)[c * p.patch_dim + i];
                z[static_cast<std::size_t>(r) * s.c_out + j] = dot;
            }
        const auto pooled = global_average_pool(z, p.rows, s.c_out);

        for (int j = 0; j < s.c_out; ++j) {
            double dot = 0;
            for (int i = 0; i < s.flat_dim(); ++i) dot += sum.avg[i] * k.row(j)[i];
            const double scale = std::max({1.0, std::fabs(dot), std::fabs(pooled[j])});
            CHECK(std::fabs(pooled[j] - dot) / scale < 1e-12);
        }

        CHECK(p.rows == s.out_h() * s.out_w());
    }
}

TEST_CASE("patch extraction is linear") {
    Rng rng(7);
    ConvSpec s = ramp_spec();
    s.c_in = 2;
    Tensor3 x(2, 3, 3), y(2, 3, 3);
    for (double& v : x.data()) v = rng.uniform(-2, 2);
    for (double& v : y.data()) v = rng.uniform(-2, 2);
    const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3);

    Tensor3 combo(2, 3, 3);
    for (std::size_t i = 0; i < combo.data().size(); ++i)
        combo.data()[i] = a * x.data()[i] + b * y.data()[i];

    const PatchMatrix px = extract_patches(x, s);
    const PatchMatrix py = extract_patches(y, s);
    const PatchMatrix pc = extract_patches(combo, s);
    for (std::size_t i = 0; i < pc.values.size(); ++i)
        CHECK(pc.values[i] == doctest::Approx(a * px.values[i] + b * py.values[i]).epsilon(1e-12));
}

TEST_CASE("padding fills with zeros") {
    ConvSpec s;
    s.c_in = 1;
    s.k_h = s.k_w = 2;
    s.stride = 1;
    s.padding = 1;
    s.h = s.w = 2;
    const Tensor3 x(1, 2, 2, {1, 2, 3, 4});
    const PatchMatrix p = extract_patches(x, s);
    REQUIRE(p.rows == 9);
    // top-left window sees only the (0,0) pixel in its bottom-right corner
    CHECK(p.patch(0, 0)[0] == 0.0);
    CHECK(p.patch(0, 0)[1] == 0.0);
    CHECK(p.patch(0, 0)[2] == 0.0);
    CHECK(p.patch(0, 0)[3] == 1.0);
    // center window sees the full input
    CHECK(p.patch(0, 4)[0] == 1.0);
    CHECK(p.patch(0, 4)[1] == 2.0);
    CHECK(p.patch(0, 4)[2] == 3.0);
    CHECK(p.patch(0, 4)[3] == 4.0);
}

TEST_CASE("geometry errors") {
    CHECK_THROWS_AS(extract_patches(Tensor3(1, 3, 3), ConvSpec{1, 1, 4, 4, 1, 0, 3, 3}),
                    geometry_error);
    CHECK_THROWS_AS(extract_patches(Tensor3(2, 3, 3), ramp_spec()), geometry_error);
    CHECK_THROWS_AS(Tensor3(1, 2, 2, {1, 2, 3}), geometry_error);
    CHECK_THROWS_AS(Tensor3(1, 2, 2, {1, 2, 3, std::nan("")}), validation_error);
    CHECK_THROWS_AS(average_patch(PatchMatrix{}), validation_error);
}
