#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

#include "safealign/text.hpp"

namespace safealign {

/// Seeded generator used everywhere reproducibility matters. mt19937_64 is
/// fully specified by the standard; the distributions below are ours because
/// std::uniform_int_distribution and std::shuffle are implementation-defined.
using Rng = std::mt19937_64;

/// Uniform integer in [0, bound) by rejection sampling. bound must be > 0.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = Rng::max() - Rng::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

/// Fisher-Yates, walking down from the last element.
template <class T>
void seeded_shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
    using std::swap;
    swap(v[i - 1], v[j]);
  }
}

/// Deterministic per-stratum seed: the run seed xor the FNV-1a hash of the
/// stratum name.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stratum) noexcept {
  return seed ^ text::fnv1a64(stratum);
}

}  // namespace safealign
