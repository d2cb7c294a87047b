#pragma once

#include <cstdint>
#include <random>

namespace hmws {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Independent stream for (seed, datapoint, iteration): reproducible whatever
// the worker that runs it.
Rng derive_stream(std::uint64_t seed, std::uint64_t datapoint, std::uint64_t iteration);

// Tags for streams that are not tied to a datapoint.
inline constexpr std::uint64_t kBatchStream = 0xB47C400000000000ULL;
inline constexpr std::uint64_t kEvalStream = 0xE7A1000000000000ULL;
inline constexpr std::uint64_t kInitStream = 0x1417000000000000ULL;
inline constexpr std::uint64_t kDataStream = 0xDA7A000000000000ULL;

double standard_normal(Rng& rng);
double uniform01(Rng& rng);

}  // namespace hmws
