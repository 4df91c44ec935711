#include <doctest.h>

#include "gdc/cost_model.hpp"
#include "gdc/errors.hpp"
#include "gdc/rng.hpp"

using namespace gdc;

TEST_CASE("cost analyze: the M=N=128, H=64, B=304, K=3 worked example") {
    CostReport r = analyze(128, 128, 3, 64, 304, 4);
    CHECK(u128_str(r.naive_bytes) == "11475615744");
    CHECK(u128_str(r.fact_bytes) == "89718784");
    CHECK(format_gb(r.naive_bytes) == "10.7 GB");
    CHECK(format_gb(r.fact_bytes) == "0.08 GB");
    const double naive_over_fact = 1.0 / r.ratio_fact_over_naive;
    CHECK(naive_over_fact > 127.0);
    CHECK(naive_over_fact < 129.0);
    CHECK(r.table().find("10.7 GB") != std::string::npos);
    CHECK(r.table().find("0.08 GB") != std::string::npos);
}

TEST_CASE("cost analyze: ratio approaches 1/N as the kernel plane grows") {
    CostReport r = analyze(8, 1, 3, 4096, 4096, 4);
    CHECK(r.ratio_fact_over_naive == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("cost analyze: degenerate M=2 N=3 K=H=B=1 gives ratio above one") {
    CostReport r = analyze(2, 3, 1, 1, 1, 4);
    CHECK(u128_str(r.naive_kernel_elems) == "6");
    CHECK(u128_str(r.fact_kernel_elems) == "8");
    CHECK(r.ratio_fact_over_naive == doctest::Approx(8.0 / 6.0).epsilon(1e-12));
    // 1/N + 1/(K^2 H B) = 1/3 + 1.
    CHECK(r.ratio_fact_over_naive == doctest::Approx(1.0 / 3.0 + 1.0).epsilon(1e-12));
}

TEST_CASE("cost analyze: exact rational identity fact*N*K2HB == naive*(K2HB + N)") {
    RngStream rng(71, "rational");
    for (int trial = 0; trial < 200; ++trial) {
        const std::int64_t m = rng.uniform_int(1, 4096);
        const std::int64_t n = rng.uniform_int(1, 4096);
        const std::int64_t k = rng.uniform_int(1, 7);
        const std::int64_t h = rng.uniform_int(1, 2048);
        const std::int64_t b = rng.uniform_int(1, 2048);
        CostReport r = analyze(m, n, k, h, b, 4);
        const u128 k2hb = u128(k) * k * h * b;
        CHECK(r.fact_kernel_elems * u128(n) * k2hb ==
              r.naive_kernel_elems * (k2hb + u128(n)));
    }
}

TEST_CASE("cost analyze: per-output MAC counts at M=128 K=3") {
    CostReport r = analyze(128, 128, 3, 64, 304, 4);
    CHECK(r.naive_macs_per_pixel_channel == 1152);  // M * K^2
    CHECK(r.fact_macs_per_pixel_channel == 137);    // K^2 + M
    CHECK(r.fact_macs_per_pixel_channel < r.naive_macs_per_pixel_channel);
}

TEST_CASE("cost analyze rejects non-positive dimensions") {
    CHECK_THROWS_AS(analyze(0, 1, 1, 1, 1, 4), ValueError);
    CHECK_THROWS_AS(analyze(1, 1, 1, -2, 1, 4), ValueError);
}

TEST_CASE("cost measure: instrumented allocations equal the analytic counts exactly") {
    MeasureReport m = measure(8, 8, 3, 16, 16);
    REQUIRE(m.naive_ran);
    CHECK(m.measured_naive_kernel_bytes ==
          static_cast<std::uint64_t>(8) * 8 * 9 * 16 * 16 * 4);
    CHECK(u128_str(m.analytic.naive_bytes) == std::to_string(m.measured_naive_kernel_bytes));
    CHECK(u128_str(m.analytic.fact_bytes) == std::to_string(m.measured_fact_kernel_bytes));
}

TEST_CASE("cost measure: above-cap configs fall back to analytic-only") {
    MeasureReport m = measure(128, 128, 3, 64, 304);
    CHECK(!m.naive_ran);
    CHECK(m.measured_fact_kernel_bytes > 0);
    CHECK(m.table().find("analytic only") != std::string::npos);
}

TEST_CASE("csv export carries the documented columns") {
    CostReport r = analyze(2, 3, 1, 1, 1, 4);
    CHECK(CostReport::csv_header() == "M,N,K,H,B,naive_bytes,fact_bytes,ratio");
    CHECK(r.csv_row().find("2,3,1,1,1,24,32,") == 0);
}
