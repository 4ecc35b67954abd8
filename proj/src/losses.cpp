#include "fedhal/losses.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "fedhal/error.hpp"

namespace fedhal {

namespace {

constexpr double kDistEps = 1e-12;

void check_batch_composition(const IntVectorRef& labels) {
  std::map<int, int> counts;
  for (Eigen::Index i = 0; i < labels.size(); ++i) ++counts[labels[i]];
  if (counts.size() < 2) throw batch_error("triplet_loss: batch has a single class");
  for (const auto& [label, count] : counts)
    if (count < 2)
      throw batch_error("triplet_loss: label " + std::to_string(label) +
                        " has a single instance");
}

}  // namespace

LossValue triplet_loss(const MatrixRef& features, const IntVectorRef& labels,
                       double margin) {
  const Eigen::Index n = features.rows();
  if (n != labels.size()) throw dimension_error("triplet_loss: feature/label mismatch");
  check_batch_composition(labels);

  Matrix dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d =
          std::sqrt((features.row(i) - features.row(j)).squaredNorm() + kDistEps);
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }

  LossValue out;
  out.grad = Matrix::Zero(n, features.cols());
  double total = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    Eigen::Index hard_pos = -1;
    double d_pos = -std::numeric_limits<double>::infinity();
    Eigen::Index hard_neg = -1;
    double d_neg = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == a) continue;
      if (labels[j] == labels[a]) {
        if (dist(a, j) > d_pos) {
          d_pos = dist(a, j);
          hard_pos = j;
        }
      } else if (dist(a, j) < d_neg) {
        d_neg = dist(a, j);
        hard_neg = j;
      }
    }
    const double hinge = d_pos - d_neg + margin;
    if (hinge > 0.0) {
      total += hinge;
      const Eigen::RowVectorXd dir_pos = (features.row(a) - features.row(hard_pos)) / d_pos;
      const Eigen::RowVectorXd dir_neg = (features.row(a) - features.row(hard_neg)) / d_neg;
      out.grad.row(a) += dir_pos - dir_neg;
      out.grad.row(hard_pos) -= dir_pos;
      out.grad.row(hard_neg) += dir_neg;
    }
  }
  out.value = total / static_cast<double>(n);
  out.grad /= static_cast<double>(n);
  return out;
}

LossValue cross_entropy(const MatrixRef& logits, const IntVectorRef& labels) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index classes = logits.cols();
  if (n != labels.size()) throw dimension_error("cross_entropy: logit/label mismatch");
  if (n == 0) throw batch_error("cross_entropy: empty batch");
  for (Eigen::Index i = 0; i < n; ++i)
    if (labels[i] < 0 || labels[i] >= classes)
      throw label_error("cross_entropy: label " + std::to_string(labels[i]) +
                        " out of range");

  LossValue out;
  out.grad.resize(n, classes);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double row_max = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd shifted = logits.row(i).array() - row_max;
    const Eigen::RowVectorXd exps = shifted.array().exp();
    const double denom = exps.sum();
    total -= shifted[labels[i]] - std::log(denom);
    out.grad.row(i) = exps / denom;
    out.grad(i, labels[i]) -= 1.0;
  }
  out.value = total / static_cast<double>(n);
  out.grad /= static_cast<double>(n);
  return out;
}

LocalLossResult local_loss(const MatrixRef& features, const IntVectorRef& labels,
                           const Matrix* novel, const std::vector<Matrix>& others,
                           const ClassifierHead& head, double lambda, double margin,
                           HallucinatedLoss hallucinated_loss) {
  if (lambda < 0.0) throw domain_error("local_loss: lambda must be non-negative");
  auto check_shape = [&](const Matrix& m, const char* what) {
    if (m.rows() != features.rows() || m.cols() != features.cols())
      throw dimension_error(std::string("local_loss: ") + what + " batch shape mismatch");
  };
  if (novel != nullptr) check_shape(*novel, "novel");
  for (const Matrix& m : others) check_shape(m, "other-domain");

  LocalLossResult out;
  out.grad_head_w = Matrix::Zero(head.w.rows(), head.w.cols());
  out.grad_head_b = Vector::Zero(head.b.size());

  const LossValue tri = triplet_loss(features, labels, margin);
  out.tri_original = tri.value;
  out.grad_features = tri.grad;

  const Matrix logits = classifier_forward(head, features);
  const LossValue ce = cross_entropy(logits, labels);
  out.ce_original = ce.value;
  out.grad_head_w += features.transpose() * ce.grad;
  out.grad_head_b += ce.grad.colwise().sum().transpose();
  out.grad_features += ce.grad * head.w.transpose();

  out.value = tri.value + ce.value;

  if (lambda > 0.0 && (novel != nullptr || !others.empty())) {
    double bracket = 0.0;
    if (novel != nullptr) {
      if (hallucinated_loss == HallucinatedLoss::kTriplet) {
        LossValue l = triplet_loss(*novel, labels, margin);
        out.novel_term = l.value;
        out.grad_novel = lambda * l.grad;
      } else {
        const Matrix h_logits = classifier_forward(head, *novel);
        const LossValue l = cross_entropy(h_logits, labels);
        out.novel_term = l.value;
        out.grad_head_w += lambda * (novel->transpose() * l.grad);
        out.grad_head_b += lambda * l.grad.colwise().sum().transpose();
        out.grad_novel = lambda * (l.grad * head.w.transpose());
      }
      bracket += out.novel_term;
    }
    if (!others.empty()) {
      const double coeff = lambda / static_cast<double>(others.size());
      double sum = 0.0;
      out.grad_others.reserve(others.size());
      for (const Matrix& f : others) {
        if (hallucinated_loss == HallucinatedLoss::kTriplet) {
          LossValue l = triplet_loss(f, labels, margin);
          sum += l.value;
          out.grad_others.push_back(coeff * l.grad);
        } else {
          const Matrix h_logits = classifier_forward(head, f);
          const LossValue l = cross_entropy(h_logits, labels);
          sum += l.value;
          out.grad_head_w += coeff * (f.transpose() * l.grad);
          out.grad_head_b += coeff * l.grad.colwise().sum().transpose();
          out.grad_others.push_back(coeff * (l.grad * head.w.transpose()));
        }
      }
      out.others_mean = sum / static_cast<double>(others.size());
      bracket += sum / static_cast<double>(others.size());
    }
    out.value += lambda * bracket;
  }

  return out;
}

}  // namespace fedhal
