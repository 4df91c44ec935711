#pragma once

#include <cstdint>
#include <string>

namespace gdc {

using u128 = unsigned __int128;

std::string u128_str(u128 v);

// Human-readable gigabytes at base 2^30. One decimal for values >= 1 GB,
// two decimals below, which is the rendering used in the module's reference
// figures (base 10^9 would show 11.5 instead of 10.7).
std::string format_gb(u128 bytes);

// Kernel-memory and multiply-accumulate accounting for the naive versus
// factorized spatially-variant convolution. All counts exact in 128-bit
// integers; the byte ratio satisfies fact/naive == 1/N + 1/(K^2*H*B) as
// exact rationals.
struct CostReport {
    std::int64_t M = 0, N = 0, K = 0, H = 0, B = 0;
    int bytes_per_elem = 4;

    u128 naive_kernel_elems = 0;  // M*N*K^2*H*B
    u128 fact_kernel_elems = 0;   // M*K^2*H*B + M*N
    u128 naive_bytes = 0;
    u128 fact_bytes = 0;
    double ratio_fact_over_naive = 0.0;

    std::int64_t naive_macs_per_pixel_channel = 0;  // M*K^2
    std::int64_t fact_macs_per_pixel_channel = 0;   // K^2 + M

    std::string table() const;
    static std::string csv_header();
    std::string csv_row() const;
};

CostReport analyze(std::int64_t M, std::int64_t N, std::int64_t K, std::int64_t H,
                   std::int64_t B, int bytes_per_elem = 4);

// Empirical confirmation of analyze(): runs both convolution paths at batch 1
// and reports the actual kernel-buffer allocations plus wall time. When the
// naive bank would exceed the oracle cap the naive path is skipped and the
// report is analytic-only.
struct MeasureReport {
    CostReport analytic;
    std::uint64_t measured_naive_kernel_bytes = 0;
    std::uint64_t measured_fact_kernel_bytes = 0;
    double naive_seconds = 0.0;
    double fact_seconds = 0.0;
    bool naive_ran = false;

    std::string table() const;
};

MeasureReport measure(int M, int N, int K, int H, int B, std::uint64_t seed = 0);

}  // namespace gdc
