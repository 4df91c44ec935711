#include <benchmark/benchmark.h>

#include "gdc/guided_conv.hpp"
#include "gdc/rng.hpp"

using namespace gdc;

namespace {

TensorF random_tensor(Shape4 s, RngStream& rng) {
    TensorF t = TensorF::zeros(s);
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        t.data()[i] = static_cast<float>(rng.uniform(-1, 1));
    }
    return t;
}

// Naive unfactorized path vs the two-stage factorization at equal output.
void BM_NaiveGuidedConv(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    const int hw = static_cast<int>(state.range(1));
    RngStream rng(1, "bench");
    TensorF s = random_tensor({1, m, hw, hw}, rng);
    ChannelwiseKernels<float> cw{random_tensor({1, m * 9, hw, hw}, rng), m, 3};
    CrossChannelKernels<float> cc{random_tensor({1, m * m, 1, 1}, rng), m, m};
    FullVariantKernels<float> fk = induced_full_kernels(cw, cc);
    for (auto _ : state) {
        benchmark::DoNotOptimize(naive_guided_conv(s, fk));
    }
    state.SetItemsProcessed(state.iterations() * std::int64_t(m) * m * 9 * hw * hw);
}

void BM_FactorizedGuidedConv(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    const int hw = static_cast<int>(state.range(1));
    RngStream rng(1, "bench");
    TensorF s = random_tensor({1, m, hw, hw}, rng);
    ChannelwiseKernels<float> cw{random_tensor({1, m * 9, hw, hw}, rng), m, 3};
    CrossChannelKernels<float> cc{random_tensor({1, m * m, 1, 1}, rng), m, m};
    for (auto _ : state) {
        benchmark::DoNotOptimize(crosschannel_conv(channelwise_variant_conv(s, cw), cc));
    }
    state.SetItemsProcessed(state.iterations() * std::int64_t(m) * (9 + m) * hw * hw);
}

}  // namespace

BENCHMARK(BM_NaiveGuidedConv)->Args({8, 16})->Args({16, 16})->Args({16, 32});
BENCHMARK(BM_FactorizedGuidedConv)->Args({8, 16})->Args({16, 16})->Args({16, 32});
