#pragma once

#include <vector>

#include "fedhal/model.hpp"
#include "fedhal/types.hpp"

namespace fedhal {

/// A scalar loss with the gradient w.r.t. its direct input.
struct LossValue {
  double value = 0.0;
  Matrix grad;
};

/// Which loss the hallucinated feature sets are optimized with. Cross-entropy
/// here is an ablation knob only; it degrades retrieval (the transformed
/// features have different neighbors than the originals).
enum class HallucinatedLoss { kTriplet, kCrossEntropy };

/// Batch-hard triplet loss: per anchor, hinge on (hardest-positive distance -
/// hardest-negative distance + margin), averaged over the batch. Distances are
/// Euclidean with a 1e-12 guard under the square root; ties resolve to the
/// lowest batch index. Requires >= 2 instances of every present label and
/// >= 2 distinct labels.
LossValue triplet_loss(const MatrixRef& features, const IntVectorRef& labels,
                       double margin);

/// Mean softmax cross-entropy; grad = (softmax - one_hot) / N_b.
LossValue cross_entropy(const MatrixRef& logits, const IntVectorRef& labels);

/// Total local objective and its component terms.
struct LocalLossResult {
  double value = 0.0;
  double tri_original = 0.0;
  double ce_original = 0.0;
  double novel_term = 0.0;        // loss on the novel feature set (0 if absent)
  double others_mean = 0.0;       // mean loss over the other-domain sets
  Matrix grad_features;           // w.r.t. the original features
  Matrix grad_novel;              // empty when no novel set was given
  std::vector<Matrix> grad_others;
  Matrix grad_head_w;
  Vector grad_head_b;
};

/// Local objective:
///   tri(F) + ce(head(F), Y) + lambda * [ L(F_novel) + mean_k L(F_k) ]
/// where L is the hallucinated-set loss (triplet by default) and the mean runs
/// over the other-domain sets. Pass novel = nullptr when no novel set exists;
/// with lambda = 0 the hallucinated terms are skipped entirely.
LocalLossResult local_loss(const MatrixRef& features, const IntVectorRef& labels,
                           const Matrix* novel, const std::vector<Matrix>& others,
                           const ClassifierHead& head, double lambda, double margin,
                           HallucinatedLoss hallucinated_loss = HallucinatedLoss::kTriplet);

}  // namespace fedhal
