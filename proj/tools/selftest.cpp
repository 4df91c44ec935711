#include "selftest.hpp"

#include <fmt/format.h>

#include <cmath>
#include <functional>
#include <vector>

#include "gdc/autograd.hpp"
#include "gdc/cost_model.hpp"
#include "gdc/guided_conv.hpp"
#include "gdc/metrics.hpp"
#include "gdc/ops.hpp"
#include "gdc/rng.hpp"
#include "gdc/viz.hpp"

using namespace gdc;

namespace {

using TD = Tensor<double>;

void fill(TD& t, RngStream& rng, double lo = -1.0, double hi = 1.0) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
}

double max_rel_diff(const TD& a, const TD& b) {
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double x = a.data()[i], y = b.data()[i];
        worst = std::max(worst, std::abs(x - y) / std::max({1e-12, std::abs(x), std::abs(y)}));
    }
    return worst;
}

bool factorization_identity(std::uint64_t seed) {
    RngStream rng(seed, "selftest-fact");
    for (int trial = 0; trial < 40; ++trial) {
        const int m = static_cast<int>(rng.uniform_int(1, 4));
        const int n = static_cast<int>(rng.uniform_int(1, 4));
        const int k = rng.uniform_int(0, 1) ? 3 : 1;
        const int h = static_cast<int>(rng.uniform_int(3, 6));
        const int w = static_cast<int>(rng.uniform_int(3, 6));
        TD s = TD::zeros({1, m, h, w});
        fill(s, rng);
        ChannelwiseKernels<double> cw;
        cw.M = m;
        cw.K = k;
        cw.weights = TD::zeros({1, m * k * k, h, w});
        fill(cw.weights, rng);
        CrossChannelKernels<double> cc;
        cc.M = m;
        cc.N = n;
        cc.weights = TD::zeros({1, m * n, 1, 1});
        fill(cc.weights, rng);
        TD two = crosschannel_conv(channelwise_variant_conv(s, cw), cc);
        TD naive = naive_guided_conv(s, induced_full_kernels(cw, cc));
        if (max_rel_diff(two, naive) > 1e-10) return false;
    }
    return true;
}

double grad_check(const std::function<TD()>& fwd, std::vector<TD> params) {
    for (TD& p : params) p.set_requires_grad(true);
    GradTape<double> tape;
    {
        TapeScope<double> scope(tape);
        tape.backward(fwd());
    }
    std::vector<std::vector<double>> analytic;
    for (TD& p : params) {
        std::vector<double> g(static_cast<std::size_t>(p.numel()), 0.0);
        if (p.grad()) {
            for (std::int64_t i = 0; i < p.numel(); ++i) g[static_cast<std::size_t>(i)] = p.grad()[i];
        }
        analytic.push_back(g);
        p.zero_grad();
    }
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        TD& p = params[pi];
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            const double keep = p.data()[i];
            p.data()[i] = keep + h;
            const double lp = fwd().data()[0];
            p.data()[i] = keep - h;
            const double lm = fwd().data()[0];
            p.data()[i] = keep;
            const double fd = (lp - lm) / (2 * h);
            const double an = analytic[pi][static_cast<std::size_t>(i)];
            worst = std::max(worst,
                             std::abs(fd - an) / std::max({1e-6, std::abs(fd), std::abs(an)}));
        }
    }
    return worst;
}

bool gradient_checks(std::uint64_t seed) {
    RngStream rng(seed, "selftest-grad");
    TD x = TD::zeros({1, 2, 4, 4});
    TD w = TD::zeros({2, 2, 3, 3});
    TD u = TD::zeros({1, 2, 4, 4});
    fill(x, rng);
    fill(w, rng);
    fill(u, rng);
    TD none;
    auto conv_fwd = [&]() { return sum_all(mul(conv2d(x, w, none, 1, 1), u)); };
    if (grad_check(conv_fwd, {x, w}) > 1e-4) return false;

    GuidedConvParams<double> p;
    p.M = 2;
    p.N = 2;
    p.K = 3;
    p.kgl_weight = TD::zeros({18, 2, 3, 3});
    p.kgl_bias = TD::zeros({1, 18, 1, 1});
    p.fc_weight = TD::zeros({4, 2, 1, 1});
    p.fc_bias = TD::zeros({1, 4, 1, 1});
    fill(p.kgl_weight, rng);
    fill(p.kgl_bias, rng);
    fill(p.fc_weight, rng);
    fill(p.fc_bias, rng);
    TD img = TD::zeros({1, 2, 4, 4});
    TD dep = TD::zeros({1, 2, 4, 4});
    fill(img, rng);
    fill(dep, rng);
    auto gm_fwd = [&]() { return sum_all(mul(guided_module_forward(img, dep, p), u)); };
    return grad_check(gm_fwd, {img, dep, p.kgl_weight, p.fc_weight}) <= 1e-4;
}

bool memory_accounting() {
    CostReport r = analyze(128, 128, 3, 64, 304, 4);
    if (u128_str(r.naive_bytes) != "11475615744") return false;
    if (u128_str(r.fact_bytes) != "89718784") return false;
    const double nf = 1.0 / r.ratio_fact_over_naive;
    if (nf < 127.0 || nf > 129.0) return false;
    MeasureReport m = measure(8, 8, 3, 16, 16);
    return m.naive_ran &&
           u128_str(m.analytic.naive_bytes) == std::to_string(m.measured_naive_kernel_bytes) &&
           u128_str(m.analytic.fact_bytes) == std::to_string(m.measured_fact_kernel_bytes);
}

bool metrics_examples() {
    std::vector<float> gt = {2.0f, 2.0f};
    std::vector<float> pred = {1.0f, 4.0f};
    MetricReport r = evaluate_span(pred.data(), gt.data(), 2);
    if (std::abs(r.rel - 0.75) > 1e-12) return false;
    if (r.delta_1 != 0.0) return false;
    if (std::abs(r.rmse_m - std::sqrt(2.5)) > 1e-12) return false;
    MetricReport id = evaluate_span(gt.data(), gt.data(), 2);
    return id.rmse_mm == 0.0 && id.delta_1 == 100.0;
}

bool prewitt_reduction() {
    ChannelwiseKernels<float> k;
    k.M = 1;
    k.K = 3;
    k.weights = Tensor<float>::zeros({1, 9, 1, 1});
    const float px[9] = {-1, 0, 1, -1, 0, 1, -1, 0, 1};
    for (int i = 0; i < 9; ++i) k.weights.at(0, i, 0, 0) = px[i];
    VectorField f = kernels_to_field(k, 0, 0);
    if (f.x_at(0, 0) != 6.0f || f.y_at(0, 0) != 0.0f) return false;
    for (int i = 0; i < 9; ++i) k.weights.at(0, i, 0, 0) = 1.0f;
    VectorField f1 = kernels_to_field(k, 0, 0);
    return f1.x_at(0, 0) == 0.0f && f1.y_at(0, 0) == 0.0f;
}

bool run_group(const char* name, bool ok) {
    fmt::print("{:<24} {}\n", name, ok ? "pass" : "FAIL");
    return ok;
}

}  // namespace

bool run_selftest(std::uint64_t seed) {
    bool all = true;
    all &= run_group("factorization-identity", factorization_identity(seed));
    all &= run_group("gradient-checks", gradient_checks(seed));
    all &= run_group("memory-accounting", memory_accounting());
    all &= run_group("metrics-examples", metrics_examples());
    all &= run_group("prewitt-reduction", prewitt_reduction());
    fmt::print("selftest: {}\n", all ? "all groups pass" : "FAILURES");
    return all;
}
