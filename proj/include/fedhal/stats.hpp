#pragma once

#include <cstdint>
#include <map>

#include "fedhal/rng.hpp"
#include "fedhal/types.hpp"
#include "fedhal/wire.hpp"

namespace fedhal {

/// Per-identity feature statistics: one (mean, variance) row per identity.
struct IdStats {
  Matrix means;      // N_i x d
  Matrix variances;  // N_i x d, population variance
  std::map<int, int> id_index;  // identity label -> row

  Eigen::Index identity_count() const { return means.rows(); }
  Eigen::Index dim() const { return means.cols(); }
};

/// Domain-level feature statistics: the four d-vectors shared between clients.
/// (mu_hat, sigma_hat_sq) parameterize the Gaussian over domain means and
/// (mu_tilde, sigma_tilde_sq) the Gaussian over domain variances.
struct DomainStats {
  Vector mu_hat;
  Vector sigma_hat_sq;
  Vector mu_tilde;
  Vector sigma_tilde_sq;
  std::uint32_t client_id = 0;
  std::uint32_t epoch_stamp = 0;

  Eigen::Index dim() const { return mu_hat.size(); }
};

/// A concrete (mean, variance) pair drawn from a domain's DomainStats.
struct DomainVectors {
  Vector mu;
  Vector sigma_sq;  // >= kVarianceFloor elementwise

  Eigen::Index dim() const { return mu.size(); }
};

inline constexpr double kVarianceFloor = 1e-6;

/// Per-identity mean and population variance of raw (pre-BN) features.
IdStats compute_ifs(const MatrixRef& features, const IntVectorRef& labels);

/// Domain statistics from identity statistics: per-dimension mean and
/// population variance of the identity means and of the identity variances.
DomainStats estimate_dfs(const IdStats& ifs);

/// Draw concrete domain vectors from the two Gaussians; the variance draw is
/// clamped elementwise to kVarianceFloor.
DomainVectors sample_domain_vectors(const DomainStats& dfs, Rng& rng);

/// Wire format: magic "DFS1", client_id u32, epoch u32, d u32, then 4*d
/// little-endian 64-bit reals in order (mu_hat, sigma_hat_sq, mu_tilde,
/// sigma_tilde_sq). Round-trip is bit-exact.
wire::Bytes serialize_dfs(const DomainStats& dfs);
DomainStats parse_dfs(const wire::Bytes& bytes);

}  // namespace fedhal
