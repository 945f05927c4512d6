#pragma once

#include <cstdint>
#include <random>

#include "esswb/operator.hpp"

namespace esswb {

/// Stream identifiers for keyed RNG. A stream is addressed by
/// (seed, role, index) so that parallel evaluation order never matters.
enum class RngRole : std::uint64_t {
  kProjectionB = 1,
  kProjectionC = 2,
  kProjectionU = 3,
  kGateLowRank1 = 4,
  kGateLowRank2 = 5,
  kDelta = 6,
  kDeltaBias = 7,
  kS6B = 8,
  kS6C = 9,
  kGaussianInput = 100,
  kTaskSample = 200,
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

std::mt19937_64 keyed_engine(std::uint64_t seed, RngRole role, std::uint64_t index = 0);

/// rows x cols i.i.d. N(0, stddev^2), filled row by row.
Matrix gaussian_matrix(Index rows, Index cols, double stddev, std::mt19937_64& engine);

}  // namespace esswb
