#pragma once

#include <array>
#include <cstdint>

#include "fedhal/types.hpp"

namespace fedhal {

// Stream purposes keep independent sources of randomness from aliasing when
// derived from the same (seed, client, epoch) tuple.
namespace purpose {
inline constexpr std::uint64_t kModelInit = 1;
inline constexpr std::uint64_t kHeadInit = 2;
inline constexpr std::uint64_t kBatch = 3;
inline constexpr std::uint64_t kHallucinate = 4;
inline constexpr std::uint64_t kData = 5;
}  // namespace purpose

/// Deterministic 64-bit generator (xoshiro256**) with splittable sub-streams.
///
/// The same seed produces the same draw sequence on every platform; substreams
/// derived from distinct (seed, client, epoch, purpose) tuples do not alias.
/// Instances are single-owner: never share one across concurrent tasks.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Substream keyed by (global seed, client id, epoch, purpose tag).
  static Rng derive(std::uint64_t global_seed, std::uint64_t client_id,
                    std::uint64_t epoch, std::uint64_t purpose_tag);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1).
  double uniform();

  /// Uniform double in (0, 1].
  double uniform_pos();

  /// Standard normal via Box-Muller.
  double normal();

  /// Gamma(alpha, 1) via Marsaglia-Tsang rejection with the alpha<1 boost.
  double gamma(double alpha);

  /// Uniform integer in [0, n), unbiased. Requires n > 0.
  std::uint64_t uniform_int(std::uint64_t n);

 private:
  std::array<std::uint64_t, 4> state_;
};

/// Reparameterized Gaussian draw: mean + sqrt(variance) * eps, eps ~ N(0, I).
Vector sample_gaussian(const VectorRef& mean, const VectorRef& variance, Rng& rng);

/// Dirichlet(alpha) draw via normalized independent Gamma(alpha_i, 1) variates.
Vector sample_dirichlet(const VectorRef& alpha, Rng& rng);

}  // namespace fedhal
