#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace ancestral {

using MasterRng = std::mt19937_64;

// SplitMix64 finalizer. Used to derive independent, order-free stream keys and
// counter-indexed uniforms, so that the random input attached to an individual
// depends only on (seed, label, band, index) and never on event interleaving.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept {
  return mix64(seed ^ mix64(value + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t hash_words(std::uint64_t seed, std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = mix64(seed);
  for (auto w : words) h = hash_combine(h, w);
  return h;
}

/// Uniform in the open interval (0, 1) from 53 high bits of a hash.
constexpr double to_open_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Counter-based uniform stream: draw(i) is a pure function of (key, i).
class CounterStream {
 public:
  explicit constexpr CounterStream(std::uint64_t key) noexcept : key_(key) {}

  double uniform(std::uint64_t index, std::uint64_t slot) const noexcept {
    return to_open_unit(hash_combine(hash_combine(key_, index), slot));
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

/// Derives the seed of replicate `index` from a master seed.
inline std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return hash_words(master, {0x7265706cULL, index});
}

}  // namespace ancestral
