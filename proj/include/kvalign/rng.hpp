#pragma once

#include "kvalign/embedding.hpp"

#include <cstddef>
#include <cstdint>
#include <initializer_list>

namespace kvalign {

/// xoshiro256** seeded through SplitMix64. Streams depend only on the seed,
/// never on the standard library, so they reproduce across platforms and
/// ports. Gaussians use the Box-Muller transform on this stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (pairs are cached).
  double gaussian();

  Vector gaussian_vector(Eigen::Index dim, double stddev = 1.0);
  /// Uniform direction on the unit sphere.
  Vector unit_vector(Eigen::Index dim);

  /// Mixes a seed with stream identifiers into a new independent seed.
  static std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> ids);

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace kvalign
