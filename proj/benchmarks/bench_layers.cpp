#include <benchmark/benchmark.h>

#include "gdc/autograd.hpp"
#include "gdc/ops.hpp"
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

void BM_Conv2dForward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    RngStream rng(2, "bench-conv");
    TensorF x = random_tensor({2, c, 32, 64}, rng);
    TensorF w = random_tensor({c, c, 3, 3}, rng);
    TensorF b = random_tensor({1, c, 1, 1}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1));
    }
    state.SetItemsProcessed(state.iterations() * 2ll * c * c * 9 * 32 * 64);
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    RngStream rng(2, "bench-conv");
    TensorF x = random_tensor({2, c, 32, 64}, rng);
    TensorF w = random_tensor({c, c, 3, 3}, rng);
    TensorF b = random_tensor({1, c, 1, 1}, rng);
    x.set_requires_grad(true);
    w.set_requires_grad(true);
    for (auto _ : state) {
        GradTape<float> tape;
        TapeScope<float> scope(tape);
        tape.backward(sum_all(conv2d(x, w, b, 1, 1)));
        x.zero_grad();
        w.zero_grad();
    }
}

}  // namespace

BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK(BM_Conv2dForwardBackward)->Arg(8)->Arg(16)->Arg(32);

BENCHMARK_MAIN();
