#pragma once

#include <Eigen/Core>

namespace fedhal {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// All public arithmetic runs in 64-bit reals. Rows index samples.
using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using IntVector = VectorX<int>;

using Eigen::Ref;
using MatrixRef = Ref<const Matrix>;
using VectorRef = Ref<const Vector>;
using IntVectorRef = Ref<const IntVector>;

/// A batch of embedding vectors (one row per sample) with identity labels.
struct FeatureBatch {
  Matrix features;
  IntVector labels;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
};

}  // namespace fedhal
