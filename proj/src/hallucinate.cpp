#include "fedhal/hallucinate.hpp"

#include <cmath>

#include "fedhal/error.hpp"

namespace fedhal {

Matrix feature_hallucinate(const MatrixRef& bn_features, const DomainVectors& target) {
  if (bn_features.cols() != target.dim())
    throw dimension_error("feature_hallucinate: dimension mismatch");
  const Vector sigma = target.sigma_sq.cwiseSqrt();
  Matrix out = bn_features.array().rowwise() * sigma.transpose().array();
  out.rowwise() += target.mu.transpose();
  return out;
}

DomainVectors domain_hallucinate(const std::vector<DomainVectors>& domains,
                                 const VectorRef& weights) {
  if (domains.empty()) throw domain_error("domain_hallucinate: no domains");
  if (static_cast<Eigen::Index>(domains.size()) != weights.size())
    throw dimension_error("domain_hallucinate: domain/weight count mismatch");
  if ((weights.array() < -1e-9).any() || std::abs(weights.sum() - 1.0) > 1e-9)
    throw domain_error("domain_hallucinate: weights not on the simplex");

  const Eigen::Index d = domains.front().dim();
  DomainVectors novel;
  novel.mu = Vector::Zero(d);
  novel.sigma_sq = Vector::Zero(d);
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (domains[i].dim() != d)
      throw dimension_error("domain_hallucinate: domain dimension mismatch");
    const double w = weights[static_cast<Eigen::Index>(i)];
    novel.mu += w * domains[i].mu;
    novel.sigma_sq += w * domains[i].sigma_sq;
  }
  novel.sigma_sq = novel.sigma_sq.cwiseMax(kVarianceFloor);
  return novel;
}

Matrix dirichlet_feature_mixup(const std::vector<Matrix>& batches,
                               const VectorRef& weights) {
  if (batches.empty()) throw domain_error("dirichlet_feature_mixup: no batches");
  if (static_cast<Eigen::Index>(batches.size()) != weights.size())
    throw dimension_error("dirichlet_feature_mixup: batch/weight count mismatch");
  if ((weights.array() < -1e-9).any() || std::abs(weights.sum() - 1.0) > 1e-9)
    throw domain_error("dirichlet_feature_mixup: weights not on the simplex");

  Matrix out = Matrix::Zero(batches.front().rows(), batches.front().cols());
  for (std::size_t i = 0; i < batches.size(); ++i) {
    if (batches[i].rows() != out.rows() || batches[i].cols() != out.cols())
      throw dimension_error("dirichlet_feature_mixup: batch shape mismatch");
    out += weights[static_cast<Eigen::Index>(i)] * batches[i];
  }
  return out;
}

Matrix beta_feature_mixup(const MatrixRef& a, const MatrixRef& b, double lambda_mix) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw dimension_error("beta_feature_mixup: batch shape mismatch");
  if (lambda_mix < 0.0 || lambda_mix > 1.0)
    throw domain_error("beta_feature_mixup: lambda_mix outside [0, 1]");
  return lambda_mix * a + (1.0 - lambda_mix) * b;
}

Matrix beta_feature_mixup(const MatrixRef& a, const MatrixRef& b, Rng& rng) {
  // Beta(1, 1) is uniform on [0, 1).
  return beta_feature_mixup(a, b, rng.uniform());
}

}  // namespace fedhal
