#pragma once

#include <vector>

#include "fedhal/model.hpp"
#include "fedhal/types.hpp"

namespace fedhal {

/// Retrieval ranking over a query/gallery pair.
struct RankingResult {
  std::vector<std::vector<int>> ranked;  // per query: gallery indices by ascending distance
  Vector per_query_ap;
  double mean_ap = 0.0;
  Vector cmc;  // cmc[k-1] = fraction of queries with a match in the top k

  double rank1() const { return cmc.size() > 0 ? cmc[0] : 0.0; }
  double cmc_at(int k) const { return cmc[k - 1]; }
};

/// Raw (pre-BN) embeddings, one row per sample; eval mode, no model mutation.
Matrix extract_embeddings(const ModelParams& params, const MatrixRef& samples);

/// Rank the gallery for every query by ascending distance (Euclidean by
/// default, 1 - cosine similarity when cosine is set) with gallery-index
/// tie-break. AP per query is the mean over relevant ranks r of
/// (relevant hits at or above r) / r; mAP averages AP over queries.
RankingResult retrieval_eval(const MatrixRef& query_features,
                             const IntVectorRef& query_labels,
                             const MatrixRef& gallery_features,
                             const IntVectorRef& gallery_labels,
                             bool cosine = false);

}  // namespace fedhal
