#pragma once

#include <vector>

#include "fedhal/rng.hpp"
#include "fedhal/types.hpp"

namespace fedhal {

enum class Mode { kTrain, kEval };

struct ModelConfig {
  int input_dim = 32;
  int hidden_dim = 64;
  int feature_dim = 16;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
};

/// Embedding trunk: input -> affine -> ReLU -> affine -> features, plus the
/// running state of the output batch-norm. The batch-norm carries no
/// learnable affine (gamma = 1, beta = 0); its scaling and shifting role is
/// taken over by feature hallucination.
struct ModelParams {
  Matrix w1;  // D_in x H
  Vector b1;  // H
  Matrix w2;  // H x d
  Vector b2;  // d
  Vector bn_running_mean;  // d
  Vector bn_running_var;   // d, >= 0
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  Eigen::Index input_dim() const { return w1.rows(); }
  Eigen::Index hidden_dim() const { return w1.cols(); }
  Eigen::Index feature_dim() const { return w2.cols(); }
  bool same_shape(const ModelParams& other) const;
};

/// Per-client fully connected classification layer over the local identities.
struct ClassifierHead {
  Matrix w;  // d x N_i
  Vector b;  // N_i
  int owner_client = -1;

  Eigen::Index feature_dim() const { return w.rows(); }
  Eigen::Index class_count() const { return w.cols(); }
};

/// Intermediate activations of one forward call; consumed by backward.
struct ForwardCache {
  Matrix input;    // N_b x D_in
  Matrix pre_act;  // N_b x H
  Matrix hidden;   // N_b x H (ReLU output)
  Mode mode = Mode::kTrain;
  bool consumed = false;
};

/// Batch statistics of one batch-norm call; consumed by batch_norm_backward.
struct BatchNormCache {
  Matrix normalized;  // N_b x d
  Vector inv_std;     // d, 1/sqrt(batch_var + eps)
  Mode mode = Mode::kTrain;
  bool consumed = false;
};

/// Gradients shaped like ModelParams (+ optional classifier head).
struct GradientSet {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;
  Matrix head_w;
  Vector head_b;
  bool has_head = false;

  static GradientSet zeros_like(const ModelParams& params);
  static GradientSet zeros_like(const ModelParams& params, const ClassifierHead& head);
  bool all_finite() const;
};

ModelParams init_model(const ModelConfig& cfg, Rng& rng);
ClassifierHead init_head(int feature_dim, int class_count, int owner_client, Rng& rng);

/// Raw (pre-BN) features for a batch. Train mode requires N_b >= 2 and does
/// not touch batch-norm running state; that update happens in batch_norm.
std::pair<Matrix, ForwardCache> forward(const ModelParams& params,
                                        const MatrixRef& batch, Mode mode);

/// Normalize features. Train mode uses batch statistics (population variance)
/// and advances the running stats by exponential moving average; eval mode
/// normalizes by running stats and mutates nothing.
std::pair<Matrix, BatchNormCache> batch_norm(const MatrixRef& features,
                                             ModelParams& params, Mode mode);

Matrix classifier_forward(const ClassifierHead& head, const MatrixRef& features);

/// d(loss)/d(features) from d(loss)/d(normalized), train-mode statistics.
Matrix batch_norm_backward(BatchNormCache& cache, const MatrixRef& upstream);

/// Trunk gradients from d(loss)/d(features). Consumes the cache.
GradientSet backward(const ModelParams& params, ForwardCache& cache,
                     const MatrixRef& d_features);

/// Adds classifier gradients to grads; if d_features is non-null, accumulates
/// the logit gradient's pullback onto the feature gradient.
void classifier_backward(const ClassifierHead& head, const MatrixRef& features,
                         const MatrixRef& d_logits, GradientSet& grads,
                         Matrix* d_features);

/// Plain SGD: p <- p - lr * g. Batch-norm running stats are untouched.
/// Pass head = nullptr when grads carry no head gradients.
void sgd_step(ModelParams& params, ClassifierHead* head, const GradientSet& grads,
              double lr);

/// Weighted elementwise average of all learnable tensors and the batch-norm
/// running stats. Weights must sum to 1 within 1e-9; summation runs in the
/// given (ascending client-index) order for bit reproducibility.
ModelParams average_params(const std::vector<const ModelParams*>& models,
                           const VectorRef& weights);

}  // namespace fedhal
