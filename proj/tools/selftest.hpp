#pragma once

#include <cstdint>

// Embedded invariant suite: factorization identity, gradient checks, memory
// accounting, metrics and the Prewitt reduction. Prints one pass/fail line
// per group and returns overall success.
bool run_selftest(std::uint64_t seed);
