#include "fedhal/eval.hpp"

#include <algorithm>
#include <cmath>

#include "fedhal/error.hpp"

namespace fedhal {

Matrix extract_embeddings(const ModelParams& params, const MatrixRef& samples) {
  return forward(params, samples, Mode::kEval).first;
}

RankingResult retrieval_eval(const MatrixRef& query_features,
                             const IntVectorRef& query_labels,
                             const MatrixRef& gallery_features,
                             const IntVectorRef& gallery_labels, bool cosine) {
  const Eigen::Index q_count = query_features.rows();
  const Eigen::Index g_count = gallery_features.rows();
  if (q_count != query_labels.size() || g_count != gallery_labels.size())
    throw dimension_error("retrieval_eval: feature/label count mismatch");
  if (query_features.cols() != gallery_features.cols())
    throw dimension_error("retrieval_eval: feature width mismatch");
  if (q_count == 0 || g_count == 0)
    throw eval_error("retrieval_eval: empty query or gallery");

  RankingResult result;
  result.ranked.resize(static_cast<std::size_t>(q_count));
  result.per_query_ap.resize(q_count);
  Vector first_hit_hist = Vector::Zero(g_count);

  for (Eigen::Index q = 0; q < q_count; ++q) {
    std::vector<std::pair<double, int>> order;
    order.reserve(static_cast<std::size_t>(g_count));
    for (Eigen::Index g = 0; g < g_count; ++g) {
      double dist;
      if (cosine) {
        const double qn = query_features.row(q).norm();
        const double gn = gallery_features.row(g).norm();
        const double denom = std::max(qn * gn, 1e-30);
        dist = 1.0 - query_features.row(q).dot(gallery_features.row(g)) / denom;
      } else {
        dist = (query_features.row(q) - gallery_features.row(g)).norm();
      }
      order.emplace_back(dist, static_cast<int>(g));
    }
    std::sort(order.begin(), order.end());

    int relevant_total = 0;
    for (Eigen::Index g = 0; g < g_count; ++g)
      if (gallery_labels[g] == query_labels[q]) ++relevant_total;
    if (relevant_total == 0)
      throw eval_error("retrieval_eval: query label " +
                       std::to_string(query_labels[q]) + " absent from gallery");

    auto& ranked = result.ranked[static_cast<std::size_t>(q)];
    ranked.reserve(order.size());
    int hits = 0;
    double ap = 0.0;
    Eigen::Index first_hit = -1;
    for (std::size_t r = 0; r < order.size(); ++r) {
      ranked.push_back(order[r].second);
      if (gallery_labels[order[r].second] == query_labels[q]) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(r + 1);
        if (first_hit < 0) first_hit = static_cast<Eigen::Index>(r);
      }
    }
    result.per_query_ap[q] = ap / relevant_total;
    first_hit_hist[first_hit] += 1.0;
  }

  result.mean_ap = result.per_query_ap.mean();
  result.cmc.resize(g_count);
  double cumulative = 0.0;
  for (Eigen::Index k = 0; k < g_count; ++k) {
    cumulative += first_hit_hist[k];
    result.cmc[k] = cumulative / static_cast<double>(q_count);
  }
  return result;
}

}  // namespace fedhal
