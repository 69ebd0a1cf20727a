#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fcs {

using Rng = std::mt19937_64;

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seeds for independent substreams. Streams derived from distinct
/// (parent, key) pairs do not overlap in practice.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t key) {
  return mix64(mix64(parent) ^ (key + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view key) {
  return derive_seed(parent, fnv1a64(key));
}

template <typename... Keys>
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t first, std::uint64_t second, Keys... rest) {
  return derive_seed(derive_seed(parent, first), second, rest...);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double normal01(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

/// Uniform integer in [0, n).
inline int uniform_index(Rng& rng, int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); }

}  // namespace fcs
