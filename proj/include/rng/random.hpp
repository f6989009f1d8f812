#pragma once

#include <cstdint>
#include <string_view>

namespace rng {

/// SplitMix64 step. Used to expand seeds and to derive child streams.
std::uint64_t splitmix64(std::uint64_t& state);

/// xoshiro256** generator seeded through SplitMix64.
///
/// The stream is fully specified by the 64-bit seed, so results are
/// identical on every platform. Independent consumers (initialization,
/// reparameterization noise, data generation) each take a child stream via
/// derive(), which hashes the parent seed with a tag; adding a consumer
/// never shifts the numbers another consumer sees.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [lo, hi] (inclusive).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal via Box-Muller; caches the second variate.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  Rng derive(std::string_view tag) const;
  Rng derive(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes a 64-bit seed with a tag into a new seed (FNV-1a on the tag,
/// then two SplitMix64 rounds).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace rng
