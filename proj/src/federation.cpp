#include "fedhal/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <set>

#include "fedhal/error.hpp"
#include "fedhal/eval.hpp"
#include "fedhal/hallucinate.hpp"

namespace fedhal {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFedAvg: return "fedavg";
    case Variant::kFh: return "fh";
    case Variant::kFhDm: return "fh+dm";
    case Variant::kFhFm: return "fh+fm";
    case Variant::kDfh: return "dfh";
  }
  throw domain_error("to_string: unknown variant");
}

Variant parse_variant(const std::string& name) {
  if (name == "fedavg") return Variant::kFedAvg;
  if (name == "fh") return Variant::kFh;
  if (name == "fh+dm") return Variant::kFhDm;
  if (name == "fh+fm") return Variant::kFhFm;
  if (name == "dfh") return Variant::kDfh;
  throw config_error("unknown variant '" + name + "'");
}

double LocalTrainResult::mean_loss() const {
  if (iteration_losses.empty()) return 0.0;
  double sum = 0.0;
  for (double v : iteration_losses) sum += v;
  return sum / static_cast<double>(iteration_losses.size());
}

namespace {

HallucinationPlan make_plan(const std::vector<DomainStats>& dfs_all, Variant variant,
                            const Vector& alpha, Rng& rng) {
  HallucinationPlan plan;
  plan.domains.reserve(dfs_all.size());
  for (const DomainStats& dfs : dfs_all) plan.domains.push_back(sample_domain_vectors(dfs, rng));
  plan.weights = sample_dirichlet(alpha, rng);
  if (variant == Variant::kDfh) {
    plan.novel = domain_hallucinate(plan.domains, plan.weights);
    plan.has_novel = true;
  } else if (variant == Variant::kFhFm) {
    const auto n = static_cast<std::uint64_t>(dfs_all.size());
    plan.mix_a = static_cast<int>(rng.uniform_int(n));
    plan.mix_b = static_cast<int>(rng.uniform_int(n - 1));
    if (plan.mix_b >= plan.mix_a) ++plan.mix_b;
    plan.mix_lambda = rng.uniform();
  }
  return plan;
}

}  // namespace

std::pair<double, GradientSet> local_train_step(ModelParams& params,
                                                const ClassifierHead& head,
                                                const MatrixRef& x,
                                                const IntVectorRef& y,
                                                const HallucinationPlan* plan,
                                                int self_index,
                                                const RoundConfig& cfg) {
  const bool hallucinating =
      plan != nullptr && cfg.variant != Variant::kFedAvg && cfg.lambda > 0.0;
  if (hallucinating &&
      (self_index < 0 || self_index >= static_cast<int>(plan->domains.size())))
    throw usage_error("local_train_step: self_index outside the plan");

  auto [features, cache] = forward(params, x, Mode::kTrain);
  auto [bn_features, bn_cache] = batch_norm(features, params, Mode::kTrain);

  const int n_domains = hallucinating ? static_cast<int>(plan->domains.size()) : 0;
  std::vector<Matrix> others;
  Matrix novel;
  bool has_novel = false;
  Vector novel_scale;
  if (hallucinating) {
    std::vector<Matrix> transformed;
    transformed.reserve(static_cast<std::size_t>(n_domains));
    for (int k = 0; k < n_domains; ++k)
      transformed.push_back(
          feature_hallucinate(bn_features, plan->domains[static_cast<std::size_t>(k)]));
    others.reserve(static_cast<std::size_t>(n_domains - 1));
    for (int k = 0; k < n_domains; ++k)
      if (k != self_index) others.push_back(transformed[static_cast<std::size_t>(k)]);

    switch (cfg.variant) {
      case Variant::kFh:
      case Variant::kFedAvg:
        break;
      case Variant::kDfh:
        novel = feature_hallucinate(bn_features, plan->novel);
        novel_scale = plan->novel.sigma_sq.cwiseSqrt();
        has_novel = true;
        break;
      case Variant::kFhDm: {
        novel = dirichlet_feature_mixup(transformed, plan->weights);
        novel_scale = Vector::Zero(bn_features.cols());
        for (int k = 0; k < n_domains; ++k)
          novel_scale += plan->weights[k] *
                         plan->domains[static_cast<std::size_t>(k)].sigma_sq.cwiseSqrt();
        has_novel = true;
        break;
      }
      case Variant::kFhFm: {
        novel = beta_feature_mixup(transformed[static_cast<std::size_t>(plan->mix_a)],
                                   transformed[static_cast<std::size_t>(plan->mix_b)],
                                   plan->mix_lambda);
        novel_scale =
            plan->mix_lambda *
                plan->domains[static_cast<std::size_t>(plan->mix_a)].sigma_sq.cwiseSqrt() +
            (1.0 - plan->mix_lambda) *
                plan->domains[static_cast<std::size_t>(plan->mix_b)].sigma_sq.cwiseSqrt();
        has_novel = true;
        break;
      }
    }
  }

  LocalLossResult loss = local_loss(features, y, has_novel ? &novel : nullptr, others,
                                    head, cfg.lambda, cfg.margin, cfg.hallucinated_loss);

  // Hallucinated-branch gradients flow through the batch-norm; the sampled
  // domain vectors are constants.
  Matrix d_features = std::move(loss.grad_features);
  if (hallucinating && (!loss.grad_others.empty() || has_novel)) {
    Matrix d_bn = Matrix::Zero(bn_features.rows(), bn_features.cols());
    int other_index = 0;
    for (int k = 0; k < n_domains; ++k) {
      if (k == self_index) continue;
      const Vector sigma = plan->domains[static_cast<std::size_t>(k)].sigma_sq.cwiseSqrt();
      d_bn.array() += loss.grad_others[static_cast<std::size_t>(other_index)].array().rowwise() *
                      sigma.transpose().array();
      ++other_index;
    }
    if (has_novel)
      d_bn.array() += loss.grad_novel.array().rowwise() * novel_scale.transpose().array();
    d_features += batch_norm_backward(bn_cache, d_bn);
  }

  GradientSet grads = backward(params, cache, d_features);
  grads.head_w = std::move(loss.grad_head_w);
  grads.head_b = std::move(loss.grad_head_b);
  grads.has_head = true;
  return {loss.value, std::move(grads)};
}

LocalTrainResult local_train(ClientState& client,
                             const std::vector<DomainStats>& dfs_all,
                             const RoundConfig& cfg, int epoch) {
  const int n_domains = static_cast<int>(dfs_all.size());
  int self_index = -1;
  {
    std::set<std::uint32_t> ids;
    for (int i = 0; i < n_domains; ++i) {
      if (!ids.insert(dfs_all[static_cast<std::size_t>(i)].client_id).second)
        throw protocol_error("local_train: duplicate DFS entry");
      if (dfs_all[static_cast<std::size_t>(i)].client_id ==
          static_cast<std::uint32_t>(client.client_id))
        self_index = i;
    }
  }
  if (self_index < 0) throw protocol_error("local_train: own DFS entry missing");

  LocalTrainResult result;
  if (cfg.iters_per_round <= 0) return result;

  const DomainDataset& ds = client.data.view(client.client_id);
  Rng batch_rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(client.client_id),
                              static_cast<std::uint64_t>(epoch), purpose::kBatch);
  Rng hallu_rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(client.client_id),
                              static_cast<std::uint64_t>(epoch), purpose::kHallucinate);

  const bool hallucinating = cfg.variant != Variant::kFedAvg && cfg.lambda > 0.0;
  Vector alpha = cfg.alpha;
  if (alpha.size() == 0) alpha = Vector::Ones(n_domains);
  if (hallucinating && alpha.size() != n_domains)
    throw config_error("local_train: alpha length does not match client count");

  HallucinationPlan plan;
  if (hallucinating) plan = make_plan(dfs_all, cfg.variant, alpha, hallu_rng);

  const double lr = cfg.lr.at(epoch);
  const int batch_size = cfg.batch_size();
  result.iteration_losses.reserve(static_cast<std::size_t>(cfg.iters_per_round));

  for (int it = 0; it < cfg.iters_per_round; ++it) {
    if (hallucinating && cfg.resample_per_iteration && it > 0)
      plan = make_plan(dfs_all, cfg.variant, alpha, hallu_rng);

    const std::vector<int> indices = pk_sample_batch(ds, cfg.batch_p, cfg.batch_k, batch_rng);
    Matrix x(batch_size, ds.input_dim());
    IntVector y(batch_size);
    for (int i = 0; i < batch_size; ++i) {
      x.row(i) = ds.samples.row(indices[static_cast<std::size_t>(i)]);
      y[i] = ds.labels[indices[static_cast<std::size_t>(i)]];
    }

    auto [loss, grads] = local_train_step(client.params, client.head, x, y,
                                          hallucinating ? &plan : nullptr, self_index, cfg);
    if (!std::isfinite(loss)) throw training_error("local_train: loss diverged");
    result.iteration_losses.push_back(loss);
    sgd_step(client.params, &client.head, grads, lr);
  }
  return result;
}

DomainStats compute_client_dfs(const ClientState& client, std::uint32_t epoch_stamp) {
  const DomainDataset& ds = client.data.view(client.client_id);
  const Matrix embeddings = extract_embeddings(client.params, ds.samples);
  const IdStats ifs = compute_ifs(embeddings, ds.labels);
  DomainStats dfs = estimate_dfs(ifs);
  dfs.client_id = static_cast<std::uint32_t>(client.client_id);
  dfs.epoch_stamp = epoch_stamp;
  return dfs;
}

void begin_round(ServerState& server, int epoch) {
  server.epoch = epoch;
  server.staged.clear();
}

void client_to_server_update(ServerState& server, const std::vector<Upload>& uploads) {
  std::set<int> seen;
  for (const Upload& u : uploads)
    if (!seen.insert(u.client_id).second)
      throw protocol_error("client_to_server_update: duplicate upload from client " +
                           std::to_string(u.client_id));
  for (const Upload& u : uploads) {
    if (u.dfs.epoch_stamp < static_cast<std::uint32_t>(server.epoch))
      throw protocol_error("client_to_server_update: stale upload from client " +
                           std::to_string(u.client_id) + " (epoch " +
                           std::to_string(u.dfs.epoch_stamp) + " < " +
                           std::to_string(server.epoch) + ")");
  }
  for (const Upload& u : uploads) {
    server.registry[u.client_id] = u.dfs;
    server.staged[u.client_id] = u;
  }
}

ModelParams aggregate(const std::vector<const ModelParams*>& models,
                      const std::vector<long long>& image_counts) {
  if (models.size() != image_counts.size())
    throw dimension_error("aggregate: model/count list mismatch");
  long long total = 0;
  for (long long c : image_counts) {
    if (c <= 0) throw domain_error("aggregate: image counts must be positive");
    total += c;
  }
  if (total <= 0) throw domain_error("aggregate: zero total image count");
  Vector weights(static_cast<Eigen::Index>(image_counts.size()));
  for (std::size_t i = 0; i < image_counts.size(); ++i)
    weights[static_cast<Eigen::Index>(i)] =
        static_cast<double>(image_counts[i]) / static_cast<double>(total);
  return average_params(models, weights);
}

void aggregate_round(ServerState& server) {
  if (server.staged.empty()) throw protocol_error("aggregate_round: no staged uploads");
  std::vector<const ModelParams*> models;
  std::vector<long long> counts;
  for (const auto& [id, upload] : server.staged) {  // map iterates ascending client id
    models.push_back(&upload.params);
    counts.push_back(upload.image_count);
  }
  server.global = aggregate(models, counts);
}

void redistribute(const ServerState& server, std::vector<ClientState>& clients) {
  for (ClientState& client : clients) client.params = server.global;
}

std::vector<DomainStats> dfs_snapshot(const ServerState& server) {
  std::vector<DomainStats> out;
  out.reserve(server.registry.size());
  for (const auto& [id, dfs] : server.registry) out.push_back(dfs);
  return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "epoch,variant,seed,target_mAP,target_rank1,mean_local_loss,wall_ms\n";
  char buf[128];
  for (const MetricsRow& r : rows) {
    out += std::to_string(r.epoch) + "," + r.variant + "," + std::to_string(r.seed);
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g,", r.target_map, r.target_rank1,
                  r.mean_local_loss);
    out += buf;
    out += std::to_string(r.wall_ms) + "\n";
  }
  return out;
}

std::pair<double, double> evaluate_target(const ModelParams& model,
                                          const EvalContext& ctx) {
  if (ctx.target == nullptr || ctx.split == nullptr)
    throw usage_error("evaluate_target: missing target dataset or split");
  const Matrix all = extract_embeddings(model, ctx.target->samples);
  const auto gather = [&](const std::vector<int>& idx, Matrix& f, IntVector& l) {
    f.resize(static_cast<Eigen::Index>(idx.size()), all.cols());
    l.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      f.row(static_cast<Eigen::Index>(i)) = all.row(idx[i]);
      l[static_cast<Eigen::Index>(i)] = ctx.target->labels[idx[i]];
    }
  };
  Matrix qf, gf;
  IntVector ql, gl;
  gather(ctx.split->query, qf, ql);
  gather(ctx.split->gallery, gf, gl);
  const RankingResult r = retrieval_eval(qf, ql, gf, gl, ctx.cosine);
  return {r.mean_ap, r.rank1()};
}

FederatedResult run_federated(std::vector<ClientState>& clients,
                              const EvalContext& eval_ctx, const RoundConfig& cfg) {
  if (clients.size() < 2) throw protocol_error("run_federated: need at least 2 clients");
  std::sort(clients.begin(), clients.end(),
            [](const ClientState& a, const ClientState& b) { return a.client_id < b.client_id; });
  for (std::size_t i = 1; i < clients.size(); ++i)
    if (clients[i].client_id == clients[i - 1].client_id)
      throw protocol_error("run_federated: duplicate client id");
  // Disjoint identity spaces: global id ranges must not overlap.
  std::vector<std::pair<int, int>> ranges;
  ranges.reserve(clients.size());
  for (const ClientState& c : clients)
    ranges.emplace_back(c.data.dataset.identity_offset,
                        c.data.dataset.identity_offset + c.data.dataset.identity_count);
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i)
    if (ranges[i].first < ranges[i - 1].second)
      throw data_error("run_federated: identity label spaces overlap");

  using Clock = std::chrono::steady_clock;
  const auto elapsed_ms = [](Clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start)
        .count();
  };

  FederatedResult result;
  ServerState server;
  auto round_start = Clock::now();

  // Initialize server-side DFS from the initial local models and aggregate
  // them into the epoch-0 global model.
  begin_round(server, 0);
  std::vector<Upload> uploads;
  uploads.reserve(clients.size());
  for (const ClientState& c : clients)
    uploads.push_back({c.client_id, c.params, compute_client_dfs(c, 0), c.image_count()});
  client_to_server_update(server, uploads);
  aggregate_round(server);
  redistribute(server, clients);

  const auto make_row = [&](int epoch, double mean_loss, long long wall) {
    const auto [map, rank1] = evaluate_target(server.global, eval_ctx);
    MetricsRow row;
    row.epoch = epoch;
    row.variant = to_string(cfg.variant);
    row.seed = cfg.seed;
    row.target_map = map;
    row.target_rank1 = rank1;
    row.mean_local_loss = mean_loss;
    row.wall_ms = cfg.record_timing ? wall : 0;
    result.log.push_back(row);
  };
  make_row(0, 0.0, elapsed_ms(round_start));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    round_start = Clock::now();
    begin_round(server, epoch);
    const std::vector<DomainStats> dfs_all = dfs_snapshot(server);

    // Step 1: local training, one isolated task per client.
    std::vector<LocalTrainResult> locals(clients.size());
    if (cfg.parallel_clients) {
      std::vector<std::future<LocalTrainResult>> futures;
      futures.reserve(clients.size());
      for (std::size_t i = 0; i < clients.size(); ++i)
        futures.push_back(std::async(std::launch::async, [&clients, &dfs_all, &cfg, epoch, i] {
          return local_train(clients[i], dfs_all, cfg, epoch);
        }));
      for (std::size_t i = 0; i < clients.size(); ++i) locals[i] = futures[i].get();
    } else {
      for (std::size_t i = 0; i < clients.size(); ++i)
        locals[i] = local_train(clients[i], dfs_all, cfg, epoch);
    }

    // Step 2: client-to-server updating.
    uploads.clear();
    for (const ClientState& c : clients)
      uploads.push_back({c.client_id, c.params,
                         compute_client_dfs(c, static_cast<std::uint32_t>(epoch)),
                         c.image_count()});
    client_to_server_update(server, uploads);

    // Step 3: server-side aggregation.
    aggregate_round(server);

    // Step 4: redistributing.
    redistribute(server, clients);

    double mean_loss = 0.0;
    for (const LocalTrainResult& l : locals) mean_loss += l.mean_loss();
    mean_loss /= static_cast<double>(locals.size());
    make_row(epoch, mean_loss, elapsed_ms(round_start));
  }

  result.global = server.global;
  return result;
}

}  // namespace fedhal
