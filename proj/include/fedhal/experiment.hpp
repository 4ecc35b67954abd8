#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fedhal/data.hpp"
#include "fedhal/federation.hpp"

namespace fedhal {

/// A whole experiment: world generation, model shape, round schedule, the
/// seed list, and the output location. Parses from a single JSON file;
/// unknown keys are rejected.
struct ExperimentConfig {
  SyntheticConfig data;
  ModelConfig model;
  RoundConfig round;
  std::vector<std::uint64_t> seeds = {1};
  std::string out_dir = "out";
  std::vector<Variant> variants = {Variant::kFedAvg, Variant::kFh, Variant::kFhDm,
                                   Variant::kFhFm, Variant::kDfh};
  bool eval_cosine = false;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// The configuration with every default resolved, as canonical JSON.
std::string config_echo_json(const ExperimentConfig& cfg);

struct SimulationResult {
  FederatedResult fed;
  long long audit_total_reads = 0;
  long long audit_cross_reads = 0;
};

/// One federated run of `variant` under `seed` on an already-generated world.
SimulationResult simulate(const ExperimentConfig& cfg, const GeneratedWorld& world,
                          Variant variant, std::uint64_t seed);

struct RunArtifacts {
  std::filesystem::path metrics_csv;
  std::filesystem::path config_echo;
  std::vector<std::filesystem::path> checkpoints;
  long long audit_cross_reads = 0;
};

/// Runs cfg.round.variant for every seed and writes metrics.csv, config.json
/// and one checkpoint per seed atomically into cfg.out_dir.
RunArtifacts run_experiment(const ExperimentConfig& cfg);

struct AblationRow {
  int number = 0;  // canonical ablation row: 1=fedavg .. 5=dfh
  Variant variant = Variant::kFedAvg;
  double map_mean = 0.0;
  double map_std = 0.0;
  double rank1_mean = 0.0;
  double rank1_std = 0.0;
};

/// Runs every configured variant over the seed list on one generated world;
/// writes ablation.csv (+ config echo) and returns the per-variant summary.
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg);
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct SweepRow {
  std::string param;
  double value = 0.0;
  std::uint64_t seed = 0;
  double target_map = 0.0;
  double target_rank1 = 0.0;
};

/// Sweeps `param` ("lambda": the balancing factor; "alpha": first Dirichlet
/// entry, the rest stay 1) over `values` x seeds; writes sweep.csv.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const std::string& param,
                                const std::vector<double>& values);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Writes every generated domain (sources and target) as .fdat files.
std::vector<std::filesystem::path> export_datasets(const ExperimentConfig& cfg,
                                                   const std::filesystem::path& dir);

}  // namespace fedhal
