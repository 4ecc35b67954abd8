#pragma once

#include <vector>

#include "fedhal/rng.hpp"
#include "fedhal/stats.hpp"
#include "fedhal/types.hpp"

namespace fedhal {

/// Randomness drawn once per local round: concrete domain vectors for every
/// client (index-aligned, self included), the Dirichlet domain weights, and
/// the synthesized novel domain when one exists.
struct HallucinationPlan {
  std::vector<DomainVectors> domains;
  Vector weights;
  DomainVectors novel;
  bool has_novel = false;
  // Mixup-variant extras: the pair and coefficient for feature-level mixup.
  int mix_a = 0;
  int mix_b = 1;
  double mix_lambda = 0.5;
};

/// Remap batch-normalized features to a target domain:
///   out = mu + sqrt(sigma_sq) .* bn_features, broadcast across rows.
/// Labels ride along unchanged; per-coordinate order is preserved.
Matrix feature_hallucinate(const MatrixRef& bn_features, const DomainVectors& target);

/// Synthesize a novel domain as the w-weighted convex combination of the given
/// domain vectors. Weights must lie on the probability simplex (tol 1e-9).
DomainVectors domain_hallucinate(const std::vector<DomainVectors>& domains,
                                 const VectorRef& weights);

/// Dirichlet mixup baseline: elementwise sum of w_k * batch_k over
/// already-hallucinated feature batches.
Matrix dirichlet_feature_mixup(const std::vector<Matrix>& batches,
                               const VectorRef& weights);

/// Two-batch mixup baseline: lambda_mix * a + (1 - lambda_mix) * b.
Matrix beta_feature_mixup(const MatrixRef& a, const MatrixRef& b, double lambda_mix);

/// Same, with lambda_mix ~ Beta(1, 1) drawn from rng.
Matrix beta_feature_mixup(const MatrixRef& a, const MatrixRef& b, Rng& rng);

}  // namespace fedhal
