#pragma once

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include <cstdint>
#include <random>
#include <string_view>

namespace robcov {

// A seeded random stream. Every random quantity in the library is drawn from
// one of these; nothing consumes ambient randomness. The distributions come
// from Boost.Random rather than <random> because the standard leaves their
// algorithms to the implementation, and replay must not depend on the toolchain.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::uint64_t bits() { return engine_(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
  boost::random::uniform_01<double> uniform_;
};

// splitmix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a over the tag bytes.
constexpr std::uint64_t tag_hash(std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Frozen mapping (master seed, experiment tag, trial index) -> stream seed.
// For a fixed (master, tag) the map is injective in trial_index: the inner
// value is a bijective image of (master, tag), the index is added modulo 2^64
// and the outer mix is a bijection. Archived manifests depend on this exact
// formula; do not change it.
constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view experiment,
                                    std::uint64_t trial_index) noexcept {
  const std::uint64_t base = splitmix64(master_seed ^ splitmix64(tag_hash(experiment)));
  return splitmix64(base + trial_index);
}

inline Stream derive_stream(std::uint64_t master_seed, std::string_view experiment,
                            std::uint64_t trial_index) {
  return Stream(derive_seed(master_seed, experiment, trial_index));
}

}  // namespace robcov
