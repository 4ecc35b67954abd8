// Acceptance suite: one pass/fail line per criterion, non-zero exit on any
// failure. Criteria 1-3 are exact property suites against independent
// oracles; 4-7 run the desk-scale benchmark end to end.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fedhal/checkpoint.hpp"
#include "fedhal/eval.hpp"
#include "fedhal/experiment.hpp"
#include "support/oracles.hpp"
#include "support/pipeline_instance.hpp"

using namespace fedhal;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += why;
  }
};

// The desk-scale benchmark: data-module defaults (3 source domains, one
// unseen target, 20 ids x 12 samples, latent 8, input 32) with a short
// federated schedule sized for a laptop CPU.
ExperimentConfig desk_config() {
  ExperimentConfig cfg;
  cfg.data = SyntheticConfig{};
  cfg.data.seed = 7;
  cfg.model = ModelConfig{cfg.data.input_dim, 64, 16};
  cfg.round.epochs = 12;
  cfg.round.iters_per_round = 40;
  cfg.round.batch_p = 8;
  cfg.round.batch_k = 4;
  cfg.round.lr.base = 0.05;
  cfg.round.lambda = 5.0;
  cfg.round.margin = 0.5;
  cfg.round.variant = Variant::kDfh;
  cfg.round.seed = 0;
  cfg.seeds = {1, 2, 3, 4, 5};
  return cfg;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fedhal_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Criterion 1: oracle equivalence for estimate_dfs, domain_hallucinate,
// aggregate and retrieval mAP; 100+ random instances each, 1e-9 (1e-12 mAP).
Outcome criterion_oracles() {
  Outcome out;
  const auto start = Clock::now();

  int dfs_checked = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = Rng::derive(seed, 1, 0, 11);
    const int d = 1 + static_cast<int>(rng.uniform_int(8));
    const int ids = 2 + static_cast<int>(rng.uniform_int(9));
    const int per_id = 1 + static_cast<int>(rng.uniform_int(20));
    const Matrix f = oracles::random_matrix(ids * per_id, d, rng);
    const IntVector y = oracles::grouped_labels(ids, per_id);
    const DomainStats dfs = estimate_dfs(compute_ifs(f, y));
    const oracles::DfsReference ref = oracles::dfs_from_raw(f, y);
    for (int j = 0; j < d; ++j) {
      if (std::abs(dfs.mu_hat[j] - ref.mu_hat[j]) > 1e-9 ||
          std::abs(dfs.sigma_hat_sq[j] - ref.sigma_hat_sq[j]) > 1e-9 ||
          std::abs(dfs.mu_tilde[j] - ref.mu_tilde[j]) > 1e-9 ||
          std::abs(dfs.sigma_tilde_sq[j] - ref.sigma_tilde_sq[j]) > 1e-9)
        out.fail("estimate_dfs mismatch at seed " + std::to_string(seed));
    }
    ++dfs_checked;
  }

  int dh_checked = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = Rng::derive(seed, 2, 0, 12);
    const int n = 2 + static_cast<int>(rng.uniform_int(5));
    const int d = 1 + static_cast<int>(rng.uniform_int(8));
    std::vector<DomainVectors> domains;
    std::vector<std::vector<double>> mus, sqs;
    for (int i = 0; i < n; ++i) {
      DomainVectors dv;
      dv.mu = oracles::random_vector(d, rng);
      dv.sigma_sq = oracles::random_vector(d, rng).cwiseAbs().array() + 0.01;
      mus.emplace_back(dv.mu.data(), dv.mu.data() + d);
      sqs.emplace_back(dv.sigma_sq.data(), dv.sigma_sq.data() + d);
      domains.push_back(dv);
    }
    const Vector w = sample_dirichlet(Vector::Ones(n), rng);
    std::vector<double> mu_ref, sq_ref;
    oracles::weighted_domains(mus, sqs, std::vector<double>(w.data(), w.data() + n),
                              mu_ref, sq_ref);
    const DomainVectors novel = domain_hallucinate(domains, w);
    for (int j = 0; j < d; ++j) {
      if (std::abs(novel.mu[j] - mu_ref[j]) > 1e-9 ||
          std::abs(novel.sigma_sq[j] - std::max(sq_ref[j], kVarianceFloor)) > 1e-9)
        out.fail("domain_hallucinate mismatch at seed " + std::to_string(seed));
    }
    ++dh_checked;
  }

  int agg_checked = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = Rng::derive(seed, 3, 0, 13);
    const int n = 2 + static_cast<int>(rng.uniform_int(4));
    ModelConfig mc{2 + static_cast<int>(rng.uniform_int(4)),
                   2 + static_cast<int>(rng.uniform_int(4)),
                   1 + static_cast<int>(rng.uniform_int(4))};
    std::vector<ModelParams> models;
    std::vector<long long> counts;
    for (int i = 0; i < n; ++i) {
      models.push_back(init_model(mc, rng));
      counts.push_back(1 + static_cast<long long>(rng.uniform_int(500)));
    }
    std::vector<const ModelParams*> ptrs;
    for (const ModelParams& m : models) ptrs.push_back(&m);
    const ModelParams avg = aggregate(ptrs, counts);

    long long total = 0;
    for (long long c : counts) total += c;
    std::vector<std::vector<double>> flats;
    std::vector<double> weights;
    const auto flatten = [](const ModelParams& p) {
      std::vector<double> v;
      for (Eigen::Index r = 0; r < p.w1.rows(); ++r)
        for (Eigen::Index c = 0; c < p.w1.cols(); ++c) v.push_back(p.w1(r, c));
      for (Eigen::Index i = 0; i < p.b1.size(); ++i) v.push_back(p.b1[i]);
      for (Eigen::Index r = 0; r < p.w2.rows(); ++r)
        for (Eigen::Index c = 0; c < p.w2.cols(); ++c) v.push_back(p.w2(r, c));
      for (Eigen::Index i = 0; i < p.b2.size(); ++i) v.push_back(p.b2[i]);
      for (Eigen::Index i = 0; i < p.bn_running_mean.size(); ++i)
        v.push_back(p.bn_running_mean[i]);
      for (Eigen::Index i = 0; i < p.bn_running_var.size(); ++i)
        v.push_back(p.bn_running_var[i]);
      return v;
    };
    for (int i = 0; i < n; ++i) {
      flats.push_back(flatten(models[static_cast<std::size_t>(i)]));
      weights.push_back(static_cast<double>(counts[static_cast<std::size_t>(i)]) /
                        static_cast<double>(total));
    }
    const std::vector<double> ref = oracles::weighted_average(flats, weights);
    const std::vector<double> got = flatten(avg);
    for (std::size_t j = 0; j < ref.size(); ++j)
      if (std::abs(got[j] - ref[j]) > 1e-9)
        out.fail("aggregate mismatch at seed " + std::to_string(seed));
    ++agg_checked;
  }

  int map_checked = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = Rng::derive(seed, 4, 0, 14);
    const int labels = 2 + static_cast<int>(rng.uniform_int(5));
    const int q_count = 1 + static_cast<int>(rng.uniform_int(30));
    const int g_count = labels + static_cast<int>(rng.uniform_int(100 - labels));
    const int d = 1 + static_cast<int>(rng.uniform_int(6));
    const Matrix queries = oracles::random_matrix(q_count, d, rng);
    const Matrix gallery = oracles::random_matrix(g_count, d, rng);
    IntVector ql(q_count), gl(g_count);
    for (int i = 0; i < g_count; ++i) gl[i] = i % labels;
    for (int i = 0; i < q_count; ++i)
      ql[i] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(labels)));
    const RankingResult r = retrieval_eval(queries, ql, gallery, gl);
    const double ref = oracles::mean_average_precision(queries, ql, gallery, gl);
    if (std::abs(r.mean_ap - ref) > 1e-12)
      out.fail("mAP mismatch at seed " + std::to_string(seed));
    ++map_checked;
  }

  const double secs = seconds_since(start);
  if (secs >= 10.0) out.fail("oracle suite took " + std::to_string(secs) + "s (>= 10s)");
  out.detail = std::to_string(dfs_checked) + "+" + std::to_string(dh_checked) + "+" +
               std::to_string(agg_checked) + "+" + std::to_string(map_checked) +
               " instances in " + std::to_string(secs) + "s" +
               (out.pass ? "" : "; " + out.detail);
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 2: full-pipeline analytic gradients vs central finite differences
// (<= 1e-4 relative) on 50+ random small instances, including the CE branch.
Outcome criterion_gradients() {
  Outcome out;
  const auto start = Clock::now();

  int instances = 0;
  long long checked = 0;
  const auto check_instance = [&](std::uint64_t seed, Variant variant,
                                  HallucinatedLoss hloss) {
    fd::PipelineInstance inst = fd::make_pipeline_instance(seed, variant, hloss);
    ModelParams params = inst.params;
    const bool hallucinating = variant != Variant::kFedAvg;
    const GradientSet grads =
        local_train_step(params, inst.head, inst.x, inst.y,
                         hallucinating ? &inst.plan : nullptr, inst.self_index, inst.cfg)
            .second;

    fd::PipelineInstance probe = inst;
    const auto loss = [&probe] { return fd::pipeline_loss(probe); };
    fd::CheckStats stats;
    fd::check_matrix(loss, probe.params.w1, grads.w1, stats);
    fd::check_vector(loss, probe.params.b1, grads.b1, stats);
    fd::check_matrix(loss, probe.params.w2, grads.w2, stats);
    fd::check_vector(loss, probe.params.b2, grads.b2, stats);
    fd::check_matrix(loss, probe.head.w, grads.head_w, stats);
    fd::check_vector(loss, probe.head.b, grads.head_b, stats);
    if (stats.failed > 0)
      out.fail("variant " + to_string(variant) + " seed " + std::to_string(seed) + ": " +
               std::to_string(stats.failed) + "/" + std::to_string(stats.checked) +
               " entries off (worst |diff| " + std::to_string(stats.worst_abs_diff) + ")");
    ++instances;
    checked += stats.checked;
  };

  for (std::uint64_t seed = 0; seed < 14; ++seed)
    check_instance(seed, Variant::kDfh, HallucinatedLoss::kTriplet);
  for (std::uint64_t seed = 20; seed < 30; ++seed)
    check_instance(seed, Variant::kFh, HallucinatedLoss::kTriplet);
  for (std::uint64_t seed = 40; seed < 48; ++seed)
    check_instance(seed, Variant::kFhDm, HallucinatedLoss::kTriplet);
  for (std::uint64_t seed = 60; seed < 68; ++seed)
    check_instance(seed, Variant::kFhFm, HallucinatedLoss::kTriplet);
  for (std::uint64_t seed = 80; seed < 88; ++seed)
    check_instance(seed, Variant::kDfh, HallucinatedLoss::kCrossEntropy);
  for (std::uint64_t seed = 90; seed < 94; ++seed)
    check_instance(seed, Variant::kFedAvg, HallucinatedLoss::kTriplet);

  const double secs = seconds_since(start);
  if (instances < 50) out.fail("only " + std::to_string(instances) + " instances");
  if (secs >= 30.0) out.fail("gradient suite took " + std::to_string(secs) + "s (>= 30s)");
  out.detail = std::to_string(instances) + " instances, " + std::to_string(checked) +
               " partials in " + std::to_string(secs) + "s" +
               (out.pass ? "" : "; " + out.detail);
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 3: hallucinated batches carry the target moments: batch mean
// within 1e-6 of mu_D and batch std within 0.2% of sigma_D, 100 targets.
Outcome criterion_fh_moments() {
  Outcome out;
  int targets = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = Rng::derive(seed, 5, 0, 15);
    const int d = 2 + static_cast<int>(rng.uniform_int(15));
    const int n_b = 16 + static_cast<int>(rng.uniform_int(49));
    ModelConfig mc{4, 4, d};
    ModelParams params = init_model(mc, rng);
    const Matrix f = oracles::random_matrix(n_b, d, rng, 1.5);
    const auto [bn, cache] = batch_norm(f, params, Mode::kTrain);

    DomainVectors target;
    target.mu = oracles::random_vector(d, rng, 2.0);
    target.sigma_sq = (oracles::random_vector(d, rng).cwiseAbs().array() + 0.05).matrix();
    const Matrix halluc = feature_hallucinate(bn, target);

    for (int j = 0; j < d; ++j) {
      const double mean = halluc.col(j).mean();
      const double var = (halluc.col(j).array() - mean).square().sum() / n_b;
      const double sigma = std::sqrt(target.sigma_sq[j]);
      if (std::abs(mean - target.mu[j]) > 1e-6)
        out.fail("mean off at seed " + std::to_string(seed));
      if (std::abs(std::sqrt(var) - sigma) > 0.002 * sigma)
        out.fail("std off at seed " + std::to_string(seed));
    }
    ++targets;
  }
  out.detail = std::to_string(targets) + " random targets" +
               (out.pass ? "" : "; " + out.detail);
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 4: two identically-seeded desk runs are byte-identical (metrics
// CSV and checkpoint), and the dataset audit saw zero cross-client reads.
Outcome criterion_determinism() {
  Outcome out;
  ExperimentConfig cfg = desk_config();
  cfg.seeds = {1};

  const fs::path dir_a = scratch_dir("det_a");
  const fs::path dir_b = scratch_dir("det_b");
  cfg.out_dir = dir_a.string();
  const RunArtifacts a = run_experiment(cfg);
  cfg.out_dir = dir_b.string();
  const RunArtifacts b = run_experiment(cfg);

  if (slurp(a.metrics_csv) != slurp(b.metrics_csv)) out.fail("metrics CSVs differ");
  if (slurp(a.checkpoints[0]) != slurp(b.checkpoints[0])) out.fail("checkpoints differ");
  if (a.audit_cross_reads != 0 || b.audit_cross_reads != 0)
    out.fail("cross-client raw-data reads: " + std::to_string(a.audit_cross_reads) +
             "+" + std::to_string(b.audit_cross_reads));
  out.detail = "two runs, " + std::to_string(slurp(a.metrics_csv).size()) +
               "-byte CSV, checkpoints " +
               std::to_string(slurp(a.checkpoints[0]).size()) + " bytes" +
               (out.pass ? "" : "; " + out.detail);
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  return out;
}

// Shared by criteria 5-7.
struct TrendData {
  std::map<Variant, double> map_mean;  // seed-mean target mAP (percent points)
  double elapsed_s = 0.0;
};

TrendData run_trend_grid() {
  TrendData data;
  const auto start = Clock::now();
  ExperimentConfig cfg = desk_config();
  const fs::path dir = scratch_dir("ablation");
  cfg.out_dir = dir.string();
  const std::vector<AblationRow> rows = run_ablation(cfg);
  for (const AblationRow& row : rows) data.map_mean[row.variant] = 100.0 * row.map_mean;
  data.elapsed_s = seconds_since(start);
  fs::remove_all(dir);
  return data;
}

// Criterion 5: scaled ablation trend: dfh > fh > fedavg with dfh - fedavg
// >= +2 mAP points; the mixup baselines do not beat dfh; <= 10 minutes.
Outcome criterion_trend(const TrendData& data) {
  Outcome out;
  const double fedavg = data.map_mean.at(Variant::kFedAvg);
  const double fh = data.map_mean.at(Variant::kFh);
  const double dm = data.map_mean.at(Variant::kFhDm);
  const double fm = data.map_mean.at(Variant::kFhFm);
  const double dfh = data.map_mean.at(Variant::kDfh);

  if (!(dfh > fh)) out.fail("dfh <= fh");
  if (!(fh > fedavg)) out.fail("fh <= fedavg");
  if (!(dfh - fedavg >= 2.0)) out.fail("dfh - fedavg < 2 points");
  if (!(dm <= dfh)) out.fail("fh+dm beats dfh");
  if (!(fm <= dfh)) out.fail("fh+fm beats dfh");
  if (data.elapsed_s >= 600.0) out.fail("grid took >= 10 min");

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "mAP%%: fedavg %.2f, fh %.2f, fh+dm %.2f, fh+fm %.2f, dfh %.2f (%.0fs)",
                fedavg, fh, dm, fm, dfh, data.elapsed_s);
  out.detail = std::string(buf) + (out.pass ? "" : "; " + out.detail);
  return out;
}

// Criterion 6: optimizing hallucinated features with cross-entropy
// underperforms the triplet default.
Outcome criterion_ce_direction(const TrendData& data) {
  Outcome out;
  ExperimentConfig cfg = desk_config();
  cfg.round.hallucinated_loss = HallucinatedLoss::kCrossEntropy;
  const GeneratedWorld world = generate_domains(cfg.data);
  double ce_mean = 0.0;
  for (std::uint64_t seed : cfg.seeds) {
    const SimulationResult res = simulate(cfg, world, Variant::kDfh, seed);
    ce_mean += 100.0 * res.fed.log.back().target_map;
  }
  ce_mean /= static_cast<double>(cfg.seeds.size());
  const double triplet_mean = data.map_mean.at(Variant::kDfh);
  if (!(ce_mean < triplet_mean)) out.fail("cross-entropy variant did not underperform");
  char buf[128];
  std::snprintf(buf, sizeof(buf), "triplet %.2f vs cross-entropy %.2f mAP%%",
                triplet_mean, ce_mean);
  out.detail = std::string(buf) + (out.pass ? "" : "; " + out.detail);
  return out;
}

// Criterion 7: lambda sweep {0,2,5} is monotone and a one-entry alpha bump
// moves seed-mean mAP by < 3 points.
Outcome criterion_sensitivity(const TrendData& data) {
  Outcome out;
  ExperimentConfig cfg = desk_config();

  const fs::path dir = scratch_dir("sweep");
  cfg.out_dir = dir.string();
  const std::vector<SweepRow> lambda_rows = run_sweep(cfg, "lambda", {0.0, 2.0, 5.0});
  std::map<double, double> lambda_mean;
  for (const SweepRow& r : lambda_rows) lambda_mean[r.value] += 100.0 * r.target_map;
  for (auto& [value, total] : lambda_mean)
    total /= static_cast<double>(cfg.seeds.size());

  const std::vector<SweepRow> alpha_rows = run_sweep(cfg, "alpha", {2.0});
  double alpha2_mean = 0.0;
  for (const SweepRow& r : alpha_rows) alpha2_mean += 100.0 * r.target_map;
  alpha2_mean /= static_cast<double>(cfg.seeds.size());
  const double alpha1_mean = data.map_mean.at(Variant::kDfh);

  if (!(lambda_mean.at(5.0) >= lambda_mean.at(2.0)))
    out.fail("mAP(lambda=5) < mAP(lambda=2)");
  if (!(lambda_mean.at(2.0) >= lambda_mean.at(0.0)))
    out.fail("mAP(lambda=2) < mAP(lambda=0)");
  if (!(std::abs(alpha2_mean - alpha1_mean) < 3.0))
    out.fail("alpha perturbation moved mAP by >= 3 points");

  char buf[192];
  std::snprintf(buf, sizeof(buf),
                "lambda {0,2,5} -> {%.2f, %.2f, %.2f} mAP%%; alpha bump %.2f -> %.2f",
                lambda_mean.at(0.0), lambda_mean.at(2.0), lambda_mean.at(5.0),
                alpha1_mean, alpha2_mean);
  out.detail = std::string(buf) + (out.pass ? "" : "; " + out.detail);
  fs::remove_all(dir);
  return out;
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&failures](int number, const std::string& name, const Outcome& o) {
    std::printf("[%s] criterion %d: %s — %s\n", o.pass ? "PASS" : "FAIL", number,
                name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };

  report(1, "oracle equivalence", criterion_oracles());
  report(2, "gradient suite", criterion_gradients());
  report(3, "feature-hallucination moments", criterion_fh_moments());
  report(4, "protocol determinism & isolation", criterion_determinism());

  const TrendData trend = run_trend_grid();
  report(5, "ablation trend (scaled)", criterion_trend(trend));
  report(6, "hallucinated-loss direction", criterion_ce_direction(trend));
  report(7, "lambda/alpha sensitivity", criterion_sensitivity(trend));

  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all acceptance criteria passed\n");
  return 0;
}
