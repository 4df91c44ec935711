#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gdc {

// FNV-1a, used to fold stream names and flag strings into seeds.
inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// A named substream of a root seed. All randomness in the toolkit flows from
// one root seed through named substreams so that e.g. data order is shared
// across ablation runs while weight init differs per purpose.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}
    RngStream(std::uint64_t root_seed, std::string_view name)
        : engine_(fnv1a64(name, 0xcbf29ce484222325ull ^ (root_seed * 0x9e3779b97f4a7c15ull))) {}

    std::mt19937_64& engine() { return engine_; }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    // Uniform over [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
    }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace gdc
