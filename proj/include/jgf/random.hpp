// Seeded random streams. Every stage derives its own stream from the run's
// root seed so that stages can be re-run independently and reproducibly.
#pragma once

#include "jgf/core.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace jgf {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Counter-based derivation: (root, stage label, counter) -> child seed.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view stage,
                                    std::uint64_t counter = 0) noexcept {
  return splitmix64(splitmix64(root ^ fnv1a(stage)) + counter);
}

inline Rng make_rng(std::uint64_t root, std::string_view stage, std::uint64_t counter = 0) {
  return Rng(derive_seed(root, stage, counter));
}

inline Matrix standard_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  // column-major fill order is part of the reproducibility contract
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
  return out;
}

}  // namespace jgf
