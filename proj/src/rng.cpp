#include "esswb/rng.hpp"

namespace esswb {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::mt19937_64 keyed_engine(std::uint64_t seed, RngRole role, std::uint64_t index) {
  const std::uint64_t key =
      mix64(mix64(mix64(seed) ^ static_cast<std::uint64_t>(role)) ^ index);
  std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
  return std::mt19937_64(seq);
}

Matrix gaussian_matrix(Index rows, Index cols, double stddev, std::mt19937_64& engine) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = normal(engine);
  }
  return m;
}

}  // namespace esswb
