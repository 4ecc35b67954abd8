#include "fedhal/model.hpp"

#include <cmath>

#include "fedhal/error.hpp"

namespace fedhal {

namespace {

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = stddev * rng.normal();
  return m;
}

}  // namespace

bool ModelParams::same_shape(const ModelParams& other) const {
  return w1.rows() == other.w1.rows() && w1.cols() == other.w1.cols() &&
         w2.rows() == other.w2.rows() && w2.cols() == other.w2.cols();
}

GradientSet GradientSet::zeros_like(const ModelParams& p) {
  GradientSet g;
  g.w1 = Matrix::Zero(p.w1.rows(), p.w1.cols());
  g.b1 = Vector::Zero(p.b1.size());
  g.w2 = Matrix::Zero(p.w2.rows(), p.w2.cols());
  g.b2 = Vector::Zero(p.b2.size());
  return g;
}

GradientSet GradientSet::zeros_like(const ModelParams& p, const ClassifierHead& head) {
  GradientSet g = zeros_like(p);
  g.head_w = Matrix::Zero(head.w.rows(), head.w.cols());
  g.head_b = Vector::Zero(head.b.size());
  g.has_head = true;
  return g;
}

bool GradientSet::all_finite() const {
  bool ok = w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
  if (has_head) ok = ok && head_w.allFinite() && head_b.allFinite();
  return ok;
}

ModelParams init_model(const ModelConfig& cfg, Rng& rng) {
  if (cfg.input_dim < 1 || cfg.hidden_dim < 1 || cfg.feature_dim < 1)
    throw dimension_error("init_model: dimensions must be positive");
  ModelParams p;
  p.w1 = gaussian_matrix(cfg.input_dim, cfg.hidden_dim,
                         std::sqrt(2.0 / cfg.input_dim), rng);
  p.b1 = Vector::Zero(cfg.hidden_dim);
  p.w2 = gaussian_matrix(cfg.hidden_dim, cfg.feature_dim,
                         std::sqrt(1.0 / cfg.hidden_dim), rng);
  p.b2 = Vector::Zero(cfg.feature_dim);
  p.bn_running_mean = Vector::Zero(cfg.feature_dim);
  p.bn_running_var = Vector::Ones(cfg.feature_dim);
  p.bn_momentum = cfg.bn_momentum;
  p.bn_eps = cfg.bn_eps;
  return p;
}

ClassifierHead init_head(int feature_dim, int class_count, int owner_client, Rng& rng) {
  if (feature_dim < 1 || class_count < 1)
    throw dimension_error("init_head: dimensions must be positive");
  ClassifierHead head;
  head.w = gaussian_matrix(feature_dim, class_count, std::sqrt(1.0 / feature_dim), rng);
  head.b = Vector::Zero(class_count);
  head.owner_client = owner_client;
  return head;
}

std::pair<Matrix, ForwardCache> forward(const ModelParams& params,
                                        const MatrixRef& batch, Mode mode) {
  if (batch.cols() != params.input_dim())
    throw dimension_error("forward: input width does not match model");
  if (batch.rows() < 1) throw batch_error("forward: empty batch");
  if (mode == Mode::kTrain && batch.rows() < 2)
    throw batch_error("forward: train mode needs at least 2 samples");

  ForwardCache cache;
  cache.input = batch;
  cache.pre_act = (batch * params.w1).rowwise() + params.b1.transpose();
  cache.hidden = cache.pre_act.cwiseMax(0.0);
  cache.mode = mode;
  Matrix features = (cache.hidden * params.w2).rowwise() + params.b2.transpose();
  return {std::move(features), std::move(cache)};
}

std::pair<Matrix, BatchNormCache> batch_norm(const MatrixRef& features,
                                             ModelParams& params, Mode mode) {
  if (features.cols() != params.feature_dim())
    throw dimension_error("batch_norm: feature width does not match model");

  BatchNormCache cache;
  cache.mode = mode;
  const Eigen::Index n = features.rows();
  if (mode == Mode::kTrain) {
    if (n < 2) throw batch_error("batch_norm: train mode needs at least 2 samples");
    const Vector mean = features.colwise().sum().transpose() / static_cast<double>(n);
    Vector var = Vector::Zero(features.cols());
    for (Eigen::Index r = 0; r < n; ++r) {
      const Vector centered = features.row(r).transpose() - mean;
      var += centered.cwiseProduct(centered);
    }
    var /= static_cast<double>(n);
    cache.inv_std = (var.array() + params.bn_eps).rsqrt().matrix();
    cache.normalized =
        (features.rowwise() - mean.transpose()).array().rowwise() *
        cache.inv_std.transpose().array();
    const double m = params.bn_momentum;
    params.bn_running_mean = (1.0 - m) * params.bn_running_mean + m * mean;
    params.bn_running_var = (1.0 - m) * params.bn_running_var + m * var;
  } else {
    cache.inv_std = (params.bn_running_var.array() + params.bn_eps).rsqrt().matrix();
    cache.normalized =
        (features.rowwise() - params.bn_running_mean.transpose()).array().rowwise() *
        cache.inv_std.transpose().array();
  }
  return {cache.normalized, std::move(cache)};
}

Matrix classifier_forward(const ClassifierHead& head, const MatrixRef& features) {
  if (features.cols() != head.feature_dim())
    throw dimension_error("classifier_forward: feature width does not match head");
  return (features * head.w).rowwise() + head.b.transpose();
}

Matrix batch_norm_backward(BatchNormCache& cache, const MatrixRef& upstream) {
  if (cache.consumed) throw usage_error("batch_norm_backward: cache already consumed");
  if (cache.mode != Mode::kTrain)
    throw usage_error("batch_norm_backward: only train-mode caches are differentiable");
  if (upstream.rows() != cache.normalized.rows() ||
      upstream.cols() != cache.normalized.cols())
    throw dimension_error("batch_norm_backward: upstream shape mismatch");
  cache.consumed = true;

  const double n = static_cast<double>(upstream.rows());
  const Vector sum_g = upstream.colwise().sum().transpose();
  const Vector sum_gx =
      upstream.cwiseProduct(cache.normalized).colwise().sum().transpose();
  Matrix dx = upstream * n;
  dx.rowwise() -= sum_g.transpose();
  dx -= (cache.normalized.array().rowwise() * sum_gx.transpose().array()).matrix();
  dx.array().rowwise() *= (cache.inv_std / n).transpose().array();
  return dx;
}

GradientSet backward(const ModelParams& params, ForwardCache& cache,
                     const MatrixRef& d_features) {
  if (cache.consumed) throw usage_error("backward: cache already consumed");
  if (d_features.rows() != cache.input.rows() ||
      d_features.cols() != params.feature_dim())
    throw dimension_error("backward: upstream gradient shape mismatch");
  cache.consumed = true;

  GradientSet g = GradientSet::zeros_like(params);
  g.w2 = cache.hidden.transpose() * d_features;
  g.b2 = d_features.colwise().sum().transpose();
  Matrix d_hidden = d_features * params.w2.transpose();
  Matrix d_pre =
      d_hidden.cwiseProduct((cache.pre_act.array() > 0.0).cast<double>().matrix());
  g.w1 = cache.input.transpose() * d_pre;
  g.b1 = d_pre.colwise().sum().transpose();
  return g;
}

void classifier_backward(const ClassifierHead& head, const MatrixRef& features,
                         const MatrixRef& d_logits, GradientSet& grads,
                         Matrix* d_features) {
  if (d_logits.cols() != head.class_count() || features.cols() != head.feature_dim() ||
      features.rows() != d_logits.rows())
    throw dimension_error("classifier_backward: shape mismatch");
  if (!grads.has_head) {
    grads.head_w = Matrix::Zero(head.w.rows(), head.w.cols());
    grads.head_b = Vector::Zero(head.b.size());
    grads.has_head = true;
  }
  grads.head_w += features.transpose() * d_logits;
  grads.head_b += d_logits.colwise().sum().transpose();
  if (d_features != nullptr) *d_features += d_logits * head.w.transpose();
}

void sgd_step(ModelParams& params, ClassifierHead* head, const GradientSet& grads,
              double lr) {
  if (!(lr > 0.0)) throw domain_error("sgd_step: learning rate must be positive");
  if (!grads.all_finite()) throw training_error("sgd_step: non-finite gradient");
  params.w1 -= lr * grads.w1;
  params.b1 -= lr * grads.b1;
  params.w2 -= lr * grads.w2;
  params.b2 -= lr * grads.b2;
  if (grads.has_head) {
    if (head == nullptr) throw usage_error("sgd_step: head gradients without a head");
    head->w -= lr * grads.head_w;
    head->b -= lr * grads.head_b;
  }
}

ModelParams average_params(const std::vector<const ModelParams*>& models,
                           const VectorRef& weights) {
  if (models.empty()) throw domain_error("average_params: no models");
  if (static_cast<Eigen::Index>(models.size()) != weights.size())
    throw dimension_error("average_params: model/weight count mismatch");
  if (std::abs(weights.sum() - 1.0) > 1e-9)
    throw domain_error("average_params: weights must sum to 1");

  const ModelParams& first = *models.front();
  for (const ModelParams* m : models) {
    if (!m->same_shape(first)) throw dimension_error("average_params: shape mismatch");
    if (m->bn_momentum != first.bn_momentum || m->bn_eps != first.bn_eps)
      throw domain_error("average_params: batch-norm hyperparameters differ");
  }

  ModelParams out;
  out.w1 = Matrix::Zero(first.w1.rows(), first.w1.cols());
  out.b1 = Vector::Zero(first.b1.size());
  out.w2 = Matrix::Zero(first.w2.rows(), first.w2.cols());
  out.b2 = Vector::Zero(first.b2.size());
  out.bn_running_mean = Vector::Zero(first.bn_running_mean.size());
  out.bn_running_var = Vector::Zero(first.bn_running_var.size());
  out.bn_momentum = first.bn_momentum;
  out.bn_eps = first.bn_eps;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const double w = weights[static_cast<Eigen::Index>(i)];
    out.w1 += w * models[i]->w1;
    out.b1 += w * models[i]->b1;
    out.w2 += w * models[i]->w2;
    out.b2 += w * models[i]->b2;
    out.bn_running_mean += w * models[i]->bn_running_mean;
    out.bn_running_var += w * models[i]->bn_running_var;
  }
  return out;
}

}  // namespace fedhal
