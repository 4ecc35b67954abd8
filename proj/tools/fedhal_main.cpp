#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedhal/checkpoint.hpp"
#include "fedhal/error.hpp"
#include "fedhal/eval.hpp"
#include "fedhal/experiment.hpp"

namespace {

std::vector<double> parse_value_list(const std::string& csv) {
  std::vector<double> values;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    std::size_t next = csv.find(',', pos);
    if (next == std::string::npos) next = csv.size();
    const std::string token = csv.substr(pos, next - pos);
    try {
      std::size_t used = 0;
      values.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw fedhal::config_error("invalid value '" + token + "' in --values");
    }
    pos = next + 1;
  }
  return values;
}

int run_command(const std::string& config_path, const std::string& seed_override,
                const std::string& out_override) {
  fedhal::ExperimentConfig cfg = fedhal::load_config(config_path);
  if (!seed_override.empty())
    cfg.seeds = {static_cast<std::uint64_t>(std::stoull(seed_override))};
  if (!out_override.empty()) cfg.out_dir = out_override;
  const fedhal::RunArtifacts artifacts = fedhal::run_experiment(cfg);
  std::printf("metrics: %s\n", artifacts.metrics_csv.string().c_str());
  std::printf("config: %s\n", artifacts.config_echo.string().c_str());
  for (const auto& p : artifacts.checkpoints)
    std::printf("checkpoint: %s\n", p.string().c_str());
  return 0;
}

int ablate_command(const std::string& config_path, const std::string& out_override) {
  fedhal::ExperimentConfig cfg = fedhal::load_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  const auto rows = fedhal::run_ablation(cfg);
  std::printf("%-3s %-8s %10s %10s %12s %10s\n", "no", "variant", "mAP", "std",
              "rank1", "std");
  for (const auto& r : rows)
    std::printf("%-3d %-8s %10.4f %10.4f %12.4f %10.4f\n", r.number,
                fedhal::to_string(r.variant).c_str(), r.map_mean, r.map_std,
                r.rank1_mean, r.rank1_std);
  return 0;
}

int sweep_command(const std::string& config_path, const std::string& param,
                  const std::string& values_csv, const std::string& out_override) {
  fedhal::ExperimentConfig cfg = fedhal::load_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  const auto rows = fedhal::run_sweep(cfg, param, parse_value_list(values_csv));
  for (const auto& r : rows)
    std::printf("%s=%g seed=%llu mAP=%.4f rank1=%.4f\n", r.param.c_str(), r.value,
                static_cast<unsigned long long>(r.seed), r.target_map, r.target_rank1);
  return 0;
}

int gen_data_command(const std::string& config_path, const std::string& out_override) {
  fedhal::ExperimentConfig cfg = fedhal::load_config(config_path);
  const std::string dir = out_override.empty() ? cfg.out_dir : out_override;
  for (const auto& p : fedhal::export_datasets(cfg, dir))
    std::printf("wrote %s\n", p.string().c_str());
  return 0;
}

int eval_checkpoint_command(const std::string& config_path,
                            const std::string& checkpoint_path,
                            const std::string& export_path) {
  const fedhal::ExperimentConfig cfg = fedhal::load_config(config_path);
  const fedhal::GeneratedWorld world = fedhal::generate_domains(cfg.data);
  const fedhal::ModelParams model = fedhal::load_checkpoint(checkpoint_path);
  const fedhal::EvalContext ctx{&world.target, &world.target_split, cfg.eval_cosine};
  const auto [map, rank1] = fedhal::evaluate_target(model, ctx);
  std::printf("target mAP=%.6f rank1=%.6f\n", map, rank1);
  if (!export_path.empty()) {
    fedhal::DomainDataset embeddings = world.target;
    embeddings.samples = fedhal::extract_embeddings(model, world.target.samples);
    fedhal::save_dataset(embeddings, export_path);
    std::printf("wrote %s\n", export_path.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedhal: federated domain-generalization training simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string seed_override;
  std::string out_override;
  std::string param;
  std::string values_csv;
  std::string checkpoint_path;
  std::string export_path;

  auto* run = app.add_subcommand("run", "run the configured variant over the seed list");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--seed", seed_override, "override the seed list with one seed");
  run->add_option("--out", out_override, "override the output directory");

  auto* ablate = app.add_subcommand("ablate", "run all configured variants");
  ablate->add_option("--config", config_path, "experiment config (JSON)")->required();
  ablate->add_option("--out", out_override, "override the output directory");

  auto* sweep = app.add_subcommand("sweep", "sweep lambda or alpha over values");
  sweep->add_option("--config", config_path, "experiment config (JSON)")->required();
  sweep->add_option("--param", param, "parameter: lambda | alpha")->required();
  sweep->add_option("--values", values_csv, "comma-separated values")->required();
  sweep->add_option("--out", out_override, "override the output directory");

  auto* gen = app.add_subcommand("gen-data", "export the generated domains as .fdat");
  gen->add_option("--config", config_path, "experiment config (JSON)")->required();
  gen->add_option("--out", out_override, "output directory");

  auto* evalc = app.add_subcommand("eval-checkpoint", "evaluate a checkpoint on the target");
  evalc->add_option("--config", config_path, "experiment config (JSON)")->required();
  evalc->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  evalc->add_option("--export", export_path, "write target embeddings (.fdat)");

  try {
    app.parse(argc, argv);
    if (run->parsed()) return run_command(config_path, seed_override, out_override);
    if (ablate->parsed()) return ablate_command(config_path, out_override);
    if (sweep->parsed()) return sweep_command(config_path, param, values_csv, out_override);
    if (gen->parsed()) return gen_data_command(config_path, out_override);
    if (evalc->parsed())
      return eval_checkpoint_command(config_path, checkpoint_path, export_path);
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  } catch (const fedhal::config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
