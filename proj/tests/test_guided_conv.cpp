#include <doctest.h>

#include <set>

#include "gdc/guided_conv.hpp"
#include "gdc/rng.hpp"
#include "oracles.hpp"

using namespace gdc;

namespace {

template <typename T>
GuidedConvParams<T> random_params(RngStream& rng, int c_image, int m, int n, int k) {
    GuidedConvParams<T> p;
    p.M = m;
    p.N = n;
    p.K = k;
    p.kgl_weight = Tensor<T>::zeros({m * k * k, c_image, 3, 3});
    p.kgl_bias = Tensor<T>::zeros({1, m * k * k, 1, 1});
    p.fc_weight = Tensor<T>::zeros({m * n, c_image, 1, 1});
    p.fc_bias = Tensor<T>::zeros({1, m * n, 1, 1});
    oracle::fill_uniform(p.kgl_weight, rng);
    oracle::fill_uniform(p.kgl_bias, rng);
    oracle::fill_uniform(p.fc_weight, rng);
    oracle::fill_uniform(p.fc_bias, rng);
    return p;
}

template <typename T>
void mark_trainable(GuidedConvParams<T>& p) {
    p.kgl_weight.set_requires_grad(true);
    p.kgl_bias.set_requires_grad(true);
    p.fc_weight.set_requires_grad(true);
    p.fc_bias.set_requires_grad(true);
}

}  // namespace

TEST_CASE("generate_channelwise_kernels: zero parameters give zero kernels") {
    RngStream rng(1, "gck");
    TensorD image = TensorD::zeros({1, 2, 4, 4});
    oracle::fill_uniform(image, rng);
    GuidedConvParams<double> p = random_params<double>(rng, 2, 2, 2, 3);
    for (std::int64_t i = 0; i < p.kgl_weight.numel(); ++i) p.kgl_weight.data()[i] = 0.0;
    for (std::int64_t i = 0; i < p.kgl_bias.numel(); ++i) p.kgl_bias.data()[i] = 0.0;
    ChannelwiseKernels<double> k = generate_channelwise_kernels(image, p);
    for (std::int64_t i = 0; i < k.weights.numel(); ++i) CHECK(k.weights.data()[i] == 0.0);
}

TEST_CASE("generate_channelwise_kernels: kernels depend on image content") {
    RngStream rng(2, "gck2");
    GuidedConvParams<double> p = random_params<double>(rng, 2, 2, 2, 3);
    TensorD a = TensorD::zeros({1, 2, 4, 4});
    TensorD b = TensorD::zeros({1, 2, 4, 4});
    oracle::fill_uniform(a, rng);
    oracle::fill_uniform(b, rng);
    ChannelwiseKernels<double> ka = generate_channelwise_kernels(a, p);
    ChannelwiseKernels<double> kb = generate_channelwise_kernels(b, p);
    bool differ = false;
    for (std::int64_t i = 0; i < ka.weights.numel(); ++i) {
        if (ka.weights.data()[i] != kb.weights.data()[i]) differ = true;
    }
    CHECK(differ);
}

TEST_CASE("generate_channelwise_kernels matches the convolution oracle") {
    RngStream rng(3, "gck3");
    TensorD image = TensorD::zeros({1, 2, 4, 4});
    oracle::fill_uniform(image, rng);
    GuidedConvParams<double> p = random_params<double>(rng, 2, 2, 2, 3);
    ChannelwiseKernels<double> k = generate_channelwise_kernels(image, p);
    TensorD ref = oracle::conv2d_ref(image, p.kgl_weight, p.kgl_bias, 1, 1);
    CHECK(oracle::max_rel_diff(k.weights, ref) < 1e-12);
}

TEST_CASE("generate_crosschannel_kernels: identity embedding scales channel means") {
    // fc weight rows embed an identity; constant image of value c per channel
    // makes W'' rows equal c times those identity rows.
    const int M = 2, N = 2, C = 2;
    GuidedConvParams<double> p;
    p.M = M;
    p.N = N;
    p.K = 3;
    p.fc_weight = Tensor<double>::zeros({M * N, C, 1, 1});
    p.fc_bias = Tensor<double>::zeros({1, M * N, 1, 1});
    // row (m*N + n) reads channel m when m == n.
    for (int m = 0; m < M; ++m) p.fc_weight.at(m * N + m, m, 0, 0) = 1.0;
    TensorD image = TensorD::zeros({1, C, 3, 3});
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) {
            image.at(0, 0, y, x) = 2.5;
            image.at(0, 1, y, x) = -1.25;
        }
    CrossChannelKernels<double> k = generate_crosschannel_kernels(image, p);
    CHECK(k.at(0, 0, 0) == doctest::Approx(2.5));
    CHECK(k.at(0, 0, 1) == 0.0);
    CHECK(k.at(0, 1, 0) == 0.0);
    CHECK(k.at(0, 1, 1) == doctest::Approx(-1.25));
}

TEST_CASE("generate_crosschannel_kernels: zero parameters zero the downstream output") {
    RngStream rng(4, "gcc");
    TensorD image = TensorD::zeros({1, 2, 4, 4});
    TensorD depth = TensorD::zeros({1, 2, 4, 4});
    oracle::fill_uniform(image, rng);
    oracle::fill_uniform(depth, rng);
    GuidedConvParams<double> p = random_params<double>(rng, 2, 2, 2, 3);
    for (std::int64_t i = 0; i < p.fc_weight.numel(); ++i) p.fc_weight.data()[i] = 0.0;
    for (std::int64_t i = 0; i < p.fc_bias.numel(); ++i) p.fc_bias.data()[i] = 0.0;
    CrossChannelKernels<double> cc = generate_crosschannel_kernels(image, p);
    TensorD mid = channelwise_variant_conv(depth, generate_channelwise_kernels(image, p));
    TensorD out = crosschannel_conv(mid, cc);
    for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == 0.0);
}

TEST_CASE("generate_crosschannel_kernels matches mean-then-matrix oracle") {
    RngStream rng(5, "gcc2");
    TensorD image = TensorD::zeros({2, 3, 4, 5});
    oracle::fill_uniform(image, rng);
    GuidedConvParams<double> p = random_params<double>(rng, 3, 2, 4, 3);
    CrossChannelKernels<double> k = generate_crosschannel_kernels(image, p);
    for (int b = 0; b < 2; ++b) {
        for (int row = 0; row < p.M * p.N; ++row) {
            double acc = p.fc_bias.data()[row];
            for (int c = 0; c < 3; ++c) {
                double mean = 0.0;
                for (int y = 0; y < 4; ++y)
                    for (int x = 0; x < 5; ++x) mean += image.at(b, c, y, x);
                mean /= 20.0;
                acc += p.fc_weight.at(row, c, 0, 0) * mean;
            }
            CHECK(k.weights.at(b, row, 0, 0) == doctest::Approx(acc).epsilon(1e-12));
        }
    }
}

TEST_CASE("channelwise_variant_conv: one-hot center kernels act as identity") {
    RngStream rng(6, "cw");
    const int M = 2, K = 3;
    TensorD s = TensorD::zeros({1, M, 4, 4});
    oracle::fill_uniform(s, rng);
    ChannelwiseKernels<double> k;
    k.M = M;
    k.K = K;
    k.weights = Tensor<double>::zeros({1, M * K * K, 4, 4});
    for (int m = 0; m < M; ++m)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) k.weights.at(0, m * 9 + 4, y, x) = 1.0;
    TensorD out = channelwise_variant_conv(s, k);
    for (std::int64_t i = 0; i < s.numel(); ++i) CHECK(out.data()[i] == s.data()[i]);
}

TEST_CASE("channelwise_variant_conv: constant kernels reduce to depthwise conv2d") {
    RngStream rng(7, "cw2");
    const int M = 2, K = 3, H = 5, W = 6;
    TensorD s = TensorD::zeros({1, M, H, W});
    oracle::fill_uniform(s, rng);
    std::vector<double> kernel(M * K * K);
    for (double& v : kernel) v = rng.uniform(-1, 1);
    ChannelwiseKernels<double> k;
    k.M = M;
    k.K = K;
    k.weights = Tensor<double>::zeros({1, M * K * K, H, W});
    for (int c = 0; c < M * K * K; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) k.weights.at(0, c, y, x) = kernel[c];
    TensorD variant = channelwise_variant_conv(s, k);

    // Depthwise via conv2d one channel at a time.
    TensorD none;
    for (int m = 0; m < M; ++m) {
        TensorD xm = TensorD::zeros({1, 1, H, W});
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) xm.at(0, 0, y, x) = s.at(0, m, y, x);
        TensorD wm = TensorD::zeros({1, 1, K, K});
        for (int kk = 0; kk < K * K; ++kk) wm.data()[kk] = kernel[m * K * K + kk];
        TensorD ref = conv2d(xm, wm, none, 1, 1);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                CHECK(variant.at(0, m, y, x) ==
                      doctest::Approx(ref.at(0, 0, y, x)).epsilon(1e-6));
            }
    }
}

TEST_CASE("channelwise_variant_conv matches the per-pixel oracle") {
    RngStream rng(8, "cw3");
    TensorD s = TensorD::zeros({1, 2, 3, 3});
    oracle::fill_uniform(s, rng);
    ChannelwiseKernels<double> k;
    k.M = 2;
    k.K = 3;
    k.weights = Tensor<double>::zeros({1, 18, 3, 3});
    oracle::fill_uniform(k.weights, rng);
    TensorD out = channelwise_variant_conv(s, k);
    TensorD ref = oracle::channelwise_ref(s, k.weights, 2, 3);
    CHECK(oracle::max_rel_diff(out, ref) < 1e-12);
}

TEST_CASE("crosschannel_conv: identity and all-ones mixes") {
    RngStream rng(9, "cc");
    TensorD d = TensorD::zeros({1, 2, 3, 3});
    oracle::fill_uniform(d, rng);

    CrossChannelKernels<double> id;
    id.M = 2;
    id.N = 2;
    id.weights = Tensor<double>::zeros({1, 4, 1, 1});
    id.weights.at(0, 0, 0, 0) = 1.0;  // (m=0,n=0)
    id.weights.at(0, 3, 0, 0) = 1.0;  // (m=1,n=1)
    TensorD same = crosschannel_conv(d, id);
    for (std::int64_t i = 0; i < d.numel(); ++i) CHECK(same.data()[i] == d.data()[i]);

    CrossChannelKernels<double> ones;
    ones.M = 2;
    ones.N = 2;
    ones.weights = Tensor<double>::full({1, 4, 1, 1}, 1.0);
    TensorD summed = crosschannel_conv(d, ones);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) {
            const double expect = d.at(0, 0, y, x) + d.at(0, 1, y, x);
            CHECK(summed.at(0, 0, y, x) == doctest::Approx(expect));
            CHECK(summed.at(0, 1, y, x) == doctest::Approx(expect));
        }
}

TEST_CASE("crosschannel_conv matches the nested-loop oracle") {
    RngStream rng(10, "cc2");
    TensorD d = TensorD::zeros({2, 3, 4, 4});
    oracle::fill_uniform(d, rng);
    CrossChannelKernels<double> k;
    k.M = 3;
    k.N = 2;
    k.weights = Tensor<double>::zeros({2, 6, 1, 1});
    oracle::fill_uniform(k.weights, rng);
    TensorD out = crosschannel_conv(d, k);
    TensorD ref = oracle::crosschannel_ref(d, k.weights, 3, 2);
    CHECK(oracle::max_rel_diff(out, ref) < 1e-12);
}

TEST_CASE("naive_guided_conv: degenerate cases") {
    RngStream rng(11, "naive");
    SUBCASE("all-zero kernels give zero output") {
        TensorD s = TensorD::zeros({1, 2, 3, 3});
        oracle::fill_uniform(s, rng);
        FullVariantKernels<double> k = make_full_variant_kernels<double>(1, 2, 2, 3, 3, 3);
        TensorD out = naive_guided_conv(s, k);
        for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == 0.0);
    }
    SUBCASE("M=N=1, K=1 is a pointwise product") {
        TensorD s = TensorD::zeros({1, 1, 3, 3});
        oracle::fill_uniform(s, rng);
        FullVariantKernels<double> k = make_full_variant_kernels<double>(1, 1, 1, 1, 3, 3);
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x) k.at(0, 0, 0, 0, y, x) = rng.uniform(-1, 1);
        TensorD out = naive_guided_conv(s, k);
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x) {
                CHECK(out.at(0, 0, y, x) ==
                      doctest::Approx(k.at(0, 0, 0, 0, y, x) * s.at(0, 0, y, x)));
            }
    }
    SUBCASE("cap exceeded is rejected with the byte requirement") {
        CHECK_THROWS_WITH_AS(make_full_variant_kernels<double>(1, 512, 512, 3, 512, 512),
                             doctest::Contains("bytes"), ValueError);
    }
}

TEST_CASE("factorization identity: two-stage equals naive under the induced kernel") {
    RngStream rng(12, "fact");
    for (int trial = 0; trial < 25; ++trial) {
        const int m = static_cast<int>(rng.uniform_int(1, 4));
        const int n = static_cast<int>(rng.uniform_int(1, 4));
        const int k = rng.uniform_int(0, 1) ? 3 : 1;
        const int h = static_cast<int>(rng.uniform_int(3, 6));
        const int w = static_cast<int>(rng.uniform_int(3, 6));
        const int batch = static_cast<int>(rng.uniform_int(1, 2));

        TensorD s = TensorD::zeros({batch, m, h, w});
        oracle::fill_uniform(s, rng);
        ChannelwiseKernels<double> cw;
        cw.M = m;
        cw.K = k;
        cw.weights = Tensor<double>::zeros({batch, m * k * k, h, w});
        oracle::fill_uniform(cw.weights, rng);
        CrossChannelKernels<double> cc;
        cc.M = m;
        cc.N = n;
        cc.weights = Tensor<double>::zeros({batch, m * n, 1, 1});
        oracle::fill_uniform(cc.weights, rng);

        TensorD two_stage = crosschannel_conv(channelwise_variant_conv(s, cw), cc);
        TensorD naive = naive_guided_conv(s, induced_full_kernels(cw, cc));
        CHECK(oracle::max_rel_diff(two_stage, naive) < 1e-10);
    }
}

TEST_CASE("guided_module_forward: zero kernel generator zeroes the output") {
    RngStream rng(13, "gm");
    TensorD image = TensorD::zeros({1, 2, 4, 4});
    TensorD depth = TensorD::zeros({1, 2, 4, 4});
    oracle::fill_uniform(image, rng);
    oracle::fill_uniform(depth, rng);
    GuidedConvParams<double> p = random_params<double>(rng, 2, 2, 2, 3);
    for (std::int64_t i = 0; i < p.kgl_weight.numel(); ++i) p.kgl_weight.data()[i] = 0.0;
    for (std::int64_t i = 0; i < p.kgl_bias.numel(); ++i) p.kgl_bias.data()[i] = 0.0;
    TensorD out = guided_module_forward(image, depth, p);
    for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == 0.0);
}

TEST_CASE("guided_module_forward: batch permutation equivariance") {
    RngStream rng(14, "gm2");
    GuidedConvParams<double> p = random_params<double>(rng, 2, 2, 2, 3);
    TensorD image = TensorD::zeros({2, 2, 4, 4});
    TensorD depth = TensorD::zeros({2, 2, 4, 4});
    oracle::fill_uniform(image, rng);
    oracle::fill_uniform(depth, rng);
    TensorD out = guided_module_forward(image, depth, p);

    // Swap the two batch entries.
    auto swap_batch = [](const TensorD& t) {
        TensorD r = t.clone();
        const std::int64_t per = t.numel() / 2;
        std::copy_n(t.data() + per, per, r.data());
        std::copy_n(t.data(), per, r.data() + per);
        return r;
    };
    TensorD out_sw = guided_module_forward(swap_batch(image), swap_batch(depth), p);
    TensorD expected = swap_batch(out);
    CHECK(oracle::max_rel_diff(out_sw, expected) < 1e-12);
}

TEST_CASE("guided_module_forward: full-module finite-difference gradient") {
    RngStream rng(15, "gm3");
    TensorD image = TensorD::zeros({1, 2, 4, 4});
    TensorD depth = TensorD::zeros({1, 2, 4, 4});
    oracle::fill_uniform(image, rng);
    oracle::fill_uniform(depth, rng);
    GuidedConvParams<double> p = random_params<double>(rng, 2, 2, 2, 3);
    TensorD u = TensorD::zeros({1, 2, 4, 4});
    oracle::fill_uniform(u, rng);
    auto fwd = [&]() { return sum_all(mul(guided_module_forward(image, depth, p), u)); };
    CHECK(oracle::max_rel_grad_error(
              fwd, {image, depth, p.kgl_weight, p.kgl_bias, p.fc_weight, p.fc_bias}) < 1e-4);
}

TEST_CASE("spatial variance is real: a non-constant image yields differing pixel kernels") {
    RngStream rng(16, "sv");
    GuidedConvParams<double> p = random_params<double>(rng, 1, 1, 1, 3);
    TensorD image = TensorD::zeros({1, 1, 4, 4});
    oracle::fill_uniform(image, rng);
    ChannelwiseKernels<double> k = generate_channelwise_kernels(image, p);
    bool differ = false;
    for (int kk = 0; kk < 9 && !differ; ++kk) {
        if (k.at(0, 0, kk, 0, 0) != k.at(0, 0, kk, 2, 2)) differ = true;
    }
    CHECK(differ);
}

TEST_CASE("gradient completeness: every generator parameter receives gradient") {
    RngStream rng(17, "gcomp");
    TensorD image = TensorD::zeros({2, 2, 4, 4});
    TensorD depth = TensorD::zeros({2, 2, 4, 4});
    oracle::fill_uniform(image, rng);
    oracle::fill_uniform(depth, rng);
    GuidedConvParams<double> p = random_params<double>(rng, 2, 2, 2, 3);
    mark_trainable(p);
    GradTape<double> tape;
    {
        TapeScope<double> scope(tape);
        tape.backward(sum_all(guided_module_forward(image, depth, p)));
    }
    for (const TensorD* t : {&p.kgl_weight, &p.kgl_bias, &p.fc_weight, &p.fc_bias}) {
        REQUIRE(t->grad() != nullptr);
        bool nonzero = false;
        for (std::int64_t i = 0; i < t->numel(); ++i) {
            if (t->grad()[i] != 0.0) nonzero = true;
        }
        CHECK(nonzero);
    }
}

TEST_CASE("guided module rejects spatial disagreement between image and depth features") {
    RngStream rng(18, "err");
    GuidedConvParams<double> p = random_params<double>(rng, 2, 2, 2, 3);
    TensorD image = TensorD::zeros({1, 2, 4, 4});
    TensorD depth = TensorD::zeros({1, 2, 6, 6});
    CHECK_THROWS_AS(guided_module_forward(image, depth, p), ShapeError);
}
