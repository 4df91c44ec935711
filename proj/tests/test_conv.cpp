#include <doctest.h>

#include "gdc/ops.hpp"
#include "gdc/rng.hpp"
#include "oracles.hpp"

using namespace gdc;

namespace {

TensorF none_f;
TensorD none_d;

}  // namespace

TEST_CASE("conv2d: all-ones 3x3 center sums nine ones") {
    TensorF x = TensorF::full({1, 1, 3, 3}, 1.0f);
    TensorF w = TensorF::full({1, 1, 3, 3}, 1.0f);
    TensorF out = conv2d(x, w, none_f, 1, 1);
    CHECK(out.at(0, 0, 1, 1) == 9.0f);
    CHECK(out.at(0, 0, 0, 0) == 4.0f);  // zero-padded corner
}

TEST_CASE("conv2d: identity kernel reproduces the input") {
    RngStream rng(3, "id");
    TensorF x = TensorF::zeros({2, 2, 5, 7});
    oracle::fill_uniform(x, rng);
    TensorF w = TensorF::zeros({2, 2, 3, 3});
    w.at(0, 0, 1, 1) = 1.0f;
    w.at(1, 1, 1, 1) = 1.0f;
    TensorF out = conv2d(x, w, none_f, 1, 1);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(out.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d: strided 4x4 case matches the nested-loop oracle") {
    // 2x2 kernel [1,0;0,1] emulated as 3x3 with a zero ring.
    std::vector<float> vals(16);
    for (int i = 0; i < 16; ++i) vals[i] = static_cast<float>(i + 1);
    TensorF x = TensorF::from_data({1, 1, 4, 4}, vals);
    TensorF w = TensorF::zeros({1, 1, 3, 3});
    w.at(0, 0, 0, 0) = 1.0f;
    w.at(0, 0, 1, 1) = 1.0f;
    TensorF fast = conv2d(x, w, none_f, 2, 1);
    TensorF ref = oracle::conv2d_ref(x, w, none_f, 2, 1);
    REQUIRE(fast.shape() == ref.shape());
    for (std::int64_t i = 0; i < fast.numel(); ++i) CHECK(fast.data()[i] == ref.data()[i]);
}

TEST_CASE("conv2d matches the oracle over random shapes, strides and pads") {
    RngStream rng(11, "conv-prop");
    for (int trial = 0; trial < 20; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(1, 3));
        const int ci = static_cast<int>(rng.uniform_int(1, 4));
        const int co = static_cast<int>(rng.uniform_int(1, 4));
        const int k = rng.uniform_int(0, 1) ? 3 : 1;
        const int stride = static_cast<int>(rng.uniform_int(1, 2));
        const int pad = static_cast<int>(rng.uniform_int(0, 1));
        const int h = static_cast<int>(rng.uniform_int(k, 9));
        const int w = static_cast<int>(rng.uniform_int(k, 9));
        if (conv_out_size(h, k, stride, pad) < 1 || conv_out_size(w, k, stride, pad) < 1) continue;
        TensorD x = TensorD::zeros({n, ci, h, w});
        TensorD wt = TensorD::zeros({co, ci, k, k});
        TensorD b = TensorD::zeros({1, co, 1, 1});
        oracle::fill_uniform(x, rng);
        oracle::fill_uniform(wt, rng);
        oracle::fill_uniform(b, rng);
        TensorD fast = conv2d(x, wt, b, stride, pad);
        TensorD ref = oracle::conv2d_ref(x, wt, b, stride, pad);
        CHECK(oracle::max_rel_diff(fast, ref) < 1e-12);
    }
}

TEST_CASE("conv2d rejects channel mismatch naming both shapes") {
    TensorF x = TensorF::zeros({1, 2, 4, 4});
    TensorF w = TensorF::zeros({1, 3, 3, 3});
    CHECK_THROWS_WITH_AS(conv2d(x, w, none_f, 1, 1),
                         doctest::Contains("1x2x4x4"), ShapeError);
}

TEST_CASE("deconv2d: stride 1 identity kernel reproduces the input") {
    RngStream rng(5, "deconv-id");
    TensorF x = TensorF::zeros({1, 2, 4, 5});
    oracle::fill_uniform(x, rng);
    TensorF w = TensorF::zeros({2, 2, 3, 3});  // (C_in, C_out, K, K)
    w.at(0, 0, 1, 1) = 1.0f;
    w.at(1, 1, 1, 1) = 1.0f;
    TensorF out = deconv2d(x, w, none_f, 1, 1);
    REQUIRE(out.shape() == x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(out.data()[i] == x.data()[i]);
}

TEST_CASE("deconv2d: stride 2 zero-insertion puts values exactly at even coordinates") {
    TensorF x = TensorF::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    TensorF w = TensorF::full({1, 1, 1, 1}, 1.0f);
    TensorF out = deconv2d(x, w, none_f, 2, 0);
    REQUIRE(out.shape() == Shape4{1, 1, 3, 3});
    for (int y = 0; y < 3; ++y) {
        for (int xx = 0; xx < 3; ++xx) {
            if (y % 2 == 0 && xx % 2 == 0) {
                CHECK(out.at(0, 0, y, xx) == x.at(0, 0, y / 2, xx / 2));
            } else {
                CHECK(out.at(0, 0, y, xx) == 0.0f);
            }
        }
    }
}

TEST_CASE("deconv2d adjointness on a random 2x3x5x5 input") {
    RngStream rng(17, "deconv-adj");
    TensorD x = TensorD::zeros({2, 3, 5, 5});
    TensorD w = TensorD::zeros({3, 2, 3, 3});
    oracle::fill_uniform(x, rng);
    oracle::fill_uniform(w, rng);
    TensorD dx = deconv2d(x, w, none_d, 1, 1);
    TensorD y = TensorD::zeros(dx.shape());
    oracle::fill_uniform(y, rng);
    // conv with the same buffer read as (C_out=3, C_in=2, K, K).
    TensorD cy = conv2d(y, w, none_d, 1, 1);
    CHECK(oracle::inner(dx, y) == doctest::Approx(oracle::inner(x, cy)).epsilon(1e-6));
}

TEST_CASE("conv2d and deconv2d pass central-difference gradient checks") {
    RngStream rng(23, "conv-grad");
    for (int trial = 0; trial < 3; ++trial) {
        TensorD x = TensorD::zeros({2, 2, 4, 4});
        TensorD w = TensorD::zeros({3, 2, 3, 3});
        TensorD b = TensorD::zeros({1, 3, 1, 1});
        TensorD u = TensorD::zeros({2, 3, 2, 2});
        oracle::fill_uniform(x, rng);
        oracle::fill_uniform(w, rng);
        oracle::fill_uniform(b, rng);
        oracle::fill_uniform(u, rng);
        auto fwd = [&]() { return sum_all(mul(conv2d(x, w, b, 2, 1), u)); };
        CHECK(oracle::max_rel_grad_error(fwd, {x, w, b}) < 1e-4);

        TensorD dw = TensorD::zeros({2, 3, 2, 2});
        TensorD du = TensorD::zeros({2, 3, 8, 8});
        oracle::fill_uniform(dw, rng);
        oracle::fill_uniform(du, rng);
        auto fwd2 = [&]() { return sum_all(mul(deconv2d(x, dw, b, 2, 0), du)); };
        CHECK(oracle::max_rel_grad_error(fwd2, {x, dw, b}) < 1e-4);
    }
}
