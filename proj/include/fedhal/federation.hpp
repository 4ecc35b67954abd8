#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedhal/data.hpp"
#include "fedhal/hallucinate.hpp"
#include "fedhal/losses.hpp"
#include "fedhal/model.hpp"
#include "fedhal/stats.hpp"

namespace fedhal {

enum class Variant { kFedAvg, kFh, kFhDm, kFhFm, kDfh };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

struct LrSchedule {
  double base = 1e-3;
  std::vector<int> decay_epochs = {20, 30};
  double decay_factor = 0.5;

  double at(int epoch) const {
    double lr = base;
    for (int e : decay_epochs)
      if (epoch >= e) lr *= decay_factor;
    return lr;
  }
};

struct RoundConfig {
  int epochs = 40;
  int iters_per_round = 200;
  int batch_p = 16;
  int batch_k = 4;
  LrSchedule lr;
  double lambda = 5.0;
  double margin = 0.5;
  Vector alpha;  // Dirichlet parameter; empty means all-ones of client count
  Variant variant = Variant::kDfh;
  bool resample_per_iteration = false;
  HallucinatedLoss hallucinated_loss = HallucinatedLoss::kTriplet;
  std::uint64_t seed = 0;
  bool parallel_clients = true;
  bool record_timing = false;  // keeps metrics CSVs byte-reproducible by default

  int batch_size() const { return batch_p * batch_k; }
};

/// One client: its dataset handle, trunk, local classifier head.
struct ClientState {
  int client_id = 0;
  ClientData data;
  ModelParams params;
  ClassifierHead head;

  long long image_count() const { return data.dataset.sample_count(); }
  int identity_count() const { return data.dataset.identity_count; }
};

struct Upload {
  int client_id = 0;
  ModelParams params;
  DomainStats dfs;
  long long image_count = 0;
};

struct ServerState {
  ModelParams global;
  std::map<int, DomainStats> registry;  // client_id -> latest DFS
  std::map<int, Upload> staged;         // this round's uploads
  int epoch = 0;
};

struct LocalTrainResult {
  std::vector<double> iteration_losses;

  double mean_loss() const;
};

/// One forward/backward pass of the full local objective for a fixed batch
/// and a fixed hallucination plan. plan == nullptr (or lambda == 0) trains on
/// the original features only. self_index selects the client's own slot in
/// plan->domains. Mutates the batch-norm running stats (train-mode pass).
std::pair<double, GradientSet> local_train_step(ModelParams& params,
                                                const ClassifierHead& head,
                                                const MatrixRef& x,
                                                const IntVectorRef& y,
                                                const HallucinationPlan* plan,
                                                int self_index,
                                                const RoundConfig& cfg);

/// One local round: sample domain vectors for every client, synthesize the
/// novel domain once, then iterate PK batch -> forward -> batch-norm ->
/// hallucinate -> local loss -> SGD. Advances the model by exactly
/// cfg.iters_per_round steps; deterministic given (cfg.seed, client, epoch).
LocalTrainResult local_train(ClientState& client,
                             const std::vector<DomainStats>& dfs_all,
                             const RoundConfig& cfg, int epoch);

/// Eval-mode embeddings of the full local set -> identity stats -> DFS.
DomainStats compute_client_dfs(const ClientState& client, std::uint32_t epoch_stamp);

/// Opens round `epoch`: advances the server counter and clears staged uploads.
void begin_round(ServerState& server, int epoch);

/// Stage uploads and overwrite the DFS registry. Rejects duplicate client ids
/// within one call and uploads stamped older than the server's current epoch.
void client_to_server_update(ServerState& server, const std::vector<Upload>& uploads);

/// Weighted average with weights image_count_i / total, ascending client-index
/// order. Models and counts must be index-aligned.
ModelParams aggregate(const std::vector<const ModelParams*>& models,
                      const std::vector<long long>& image_counts);

/// Aggregate this round's staged uploads into server.global.
void aggregate_round(ServerState& server);

/// Copy the global trunk (including batch-norm state) to every client;
/// classifier heads stay local.
void redistribute(const ServerState& server, std::vector<ClientState>& clients);

/// Registry snapshot ordered by ascending client id.
std::vector<DomainStats> dfs_snapshot(const ServerState& server);

struct MetricsRow {
  int epoch = 0;
  std::string variant;
  std::uint64_t seed = 0;
  double target_map = 0.0;
  double target_rank1 = 0.0;
  double mean_local_loss = 0.0;
  long long wall_ms = 0;
};

/// CSV with header epoch,variant,seed,target_mAP,target_rank1,
/// mean_local_loss,wall_ms; doubles printed with %.17g.
std::string metrics_csv(const std::vector<MetricsRow>& rows);

struct EvalContext {
  const DomainDataset* target = nullptr;
  const RetrievalSplit* split = nullptr;
  bool cosine = false;
};

/// (mAP, rank-1) of a model on the target retrieval split.
std::pair<double, double> evaluate_target(const ModelParams& model,
                                          const EvalContext& ctx);

struct FederatedResult {
  ModelParams global;
  std::vector<MetricsRow> log;
};

/// The full protocol: initialize server-side DFS from the initial local
/// models, then per epoch run local training on every client, collect
/// uploads, aggregate, redistribute, and evaluate on the target split.
/// Deterministic end to end given cfg.seed, regardless of client scheduling.
FederatedResult run_federated(std::vector<ClientState>& clients,
                              const EvalContext& eval_ctx, const RoundConfig& cfg);

}  // namespace fedhal
