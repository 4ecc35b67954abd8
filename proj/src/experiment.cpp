#include "fedhal/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "fedhal/checkpoint.hpp"
#include "fedhal/error.hpp"

namespace fedhal {

namespace {

using nlohmann::json;

void expect_keys(const json& obj, const std::string& section,
                 const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw config_error("config: section '" + section + "' must be an object");
  for (const auto& item : obj.items())
    if (allowed.find(item.key()) == allowed.end())
      throw config_error("config: unknown key '" + item.key() + "' in " + section);
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw config_error(std::string("config: bad value for '") + key + "'");
  }
}

void parse_data(const json& obj, SyntheticConfig& cfg) {
  expect_keys(obj, "data",
              {"num_domains", "ids_per_domain", "samples_per_id", "latent_dim",
               "input_dim", "domain_shift_scale", "noise_scale", "seed"});
  read_field(obj, "num_domains", cfg.num_domains);
  read_field(obj, "ids_per_domain", cfg.ids_per_domain);
  read_field(obj, "samples_per_id", cfg.samples_per_id);
  read_field(obj, "latent_dim", cfg.latent_dim);
  read_field(obj, "input_dim", cfg.input_dim);
  read_field(obj, "domain_shift_scale", cfg.domain_shift_scale);
  read_field(obj, "noise_scale", cfg.noise_scale);
  read_field(obj, "seed", cfg.seed);
}

void parse_model(const json& obj, ModelConfig& cfg) {
  expect_keys(obj, "model", {"hidden_dim", "feature_dim", "bn_momentum", "bn_eps"});
  read_field(obj, "hidden_dim", cfg.hidden_dim);
  read_field(obj, "feature_dim", cfg.feature_dim);
  read_field(obj, "bn_momentum", cfg.bn_momentum);
  read_field(obj, "bn_eps", cfg.bn_eps);
}

void parse_round(const json& obj, RoundConfig& cfg) {
  expect_keys(obj, "round",
              {"epochs", "iters_per_round", "batch_p", "batch_k", "batch_size",
               "lr_base", "lr_decay_epochs", "lr_decay_factor", "lambda", "margin",
               "alpha", "variant", "resample_per_iteration", "hallucinated_loss",
               "parallel_clients", "record_timing"});
  read_field(obj, "epochs", cfg.epochs);
  read_field(obj, "iters_per_round", cfg.iters_per_round);
  read_field(obj, "batch_p", cfg.batch_p);
  read_field(obj, "batch_k", cfg.batch_k);
  read_field(obj, "lr_base", cfg.lr.base);
  read_field(obj, "lr_decay_epochs", cfg.lr.decay_epochs);
  read_field(obj, "lr_decay_factor", cfg.lr.decay_factor);
  read_field(obj, "lambda", cfg.lambda);
  read_field(obj, "margin", cfg.margin);
  read_field(obj, "resample_per_iteration", cfg.resample_per_iteration);
  read_field(obj, "parallel_clients", cfg.parallel_clients);
  read_field(obj, "record_timing", cfg.record_timing);
  if (obj.contains("alpha")) {
    std::vector<double> alpha;
    read_field(obj, "alpha", alpha);
    cfg.alpha.resize(static_cast<Eigen::Index>(alpha.size()));
    for (std::size_t i = 0; i < alpha.size(); ++i)
      cfg.alpha[static_cast<Eigen::Index>(i)] = alpha[i];
  }
  if (obj.contains("variant")) {
    std::string name;
    read_field(obj, "variant", name);
    cfg.variant = parse_variant(name);
  }
  if (obj.contains("hallucinated_loss")) {
    std::string name;
    read_field(obj, "hallucinated_loss", name);
    if (name == "triplet")
      cfg.hallucinated_loss = HallucinatedLoss::kTriplet;
    else if (name == "cross_entropy")
      cfg.hallucinated_loss = HallucinatedLoss::kCrossEntropy;
    else
      throw config_error("config: hallucinated_loss must be 'triplet' or 'cross_entropy'");
  }
  if (obj.contains("batch_size")) {
    int batch_size = 0;
    read_field(obj, "batch_size", batch_size);
    if (batch_size != cfg.batch_p * cfg.batch_k)
      throw config_error("config: batch_size must equal batch_p * batch_k (" +
                         std::to_string(cfg.batch_p * cfg.batch_k) + ")");
  }
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw config_error("config: seeds must be non-empty");
  if (cfg.round.epochs < 0) throw config_error("config: epochs must be >= 0");
  if (cfg.round.iters_per_round < 0)
    throw config_error("config: iters_per_round must be >= 0");
  if (cfg.round.batch_p < 2 || cfg.round.batch_k < 2)
    throw config_error("config: batch_p and batch_k must be >= 2");
  if (cfg.round.lambda < 0.0) throw config_error("config: lambda must be >= 0");
  if (cfg.round.margin < 0.0) throw config_error("config: margin must be >= 0");
  if (cfg.round.lr.base <= 0.0) throw config_error("config: lr_base must be > 0");
  if (cfg.model.hidden_dim < 1 || cfg.model.feature_dim < 1)
    throw config_error("config: model dimensions must be >= 1");
  if (cfg.model.bn_momentum <= 0.0 || cfg.model.bn_momentum > 1.0)
    throw config_error("config: bn_momentum must be in (0, 1]");
  if (cfg.model.bn_eps <= 0.0) throw config_error("config: bn_eps must be > 0");
  if (cfg.data.num_domains < 2 || cfg.data.ids_per_domain < 2 ||
      cfg.data.samples_per_id < 2 || cfg.data.latent_dim < 2 || cfg.data.input_dim < 2)
    throw config_error("config: data counts must be >= 2");
  if (cfg.data.domain_shift_scale < 0.0 || cfg.data.noise_scale < 0.0)
    throw config_error("config: data scales must be >= 0");
  if (cfg.data.input_dim < cfg.data.latent_dim)
    throw config_error("config: input_dim must be >= latent_dim");
  if (cfg.round.batch_p > cfg.data.ids_per_domain)
    throw config_error("config: batch_p exceeds ids_per_domain");
  if (cfg.data.samples_per_id < 2 * cfg.round.batch_k)
    throw config_error("config: samples_per_id must be >= 2 * batch_k");
  if (cfg.round.alpha.size() != 0) {
    if (cfg.round.alpha.size() != cfg.data.num_domains)
      throw config_error("config: alpha length must equal num_domains");
    if ((cfg.round.alpha.array() <= 0.0).any())
      throw config_error("config: alpha entries must be > 0");
  }
  if (cfg.variants.empty()) throw config_error("config: variants must be non-empty");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Collects artifact contents, then commits them atomically (tmp + rename);
/// on a failed commit every file already placed is removed again.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string content) {
    pending_.emplace_back(name, std::move(content));
  }

  std::filesystem::path path_of(const std::string& name) const { return dir_ / name; }

  void commit() {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw io_error("cannot create output directory " + dir_.string());
    std::vector<std::filesystem::path> placed;
    try {
      for (const auto& [name, content] : pending_) {
        const std::filesystem::path final_path = dir_ / name;
        const std::filesystem::path tmp_path = dir_ / (name + ".tmp");
        {
          std::ofstream f(tmp_path, std::ios::binary | std::ios::trunc);
          if (!f) throw io_error("cannot open " + tmp_path.string());
          f.write(content.data(), static_cast<std::streamsize>(content.size()));
          if (!f) throw io_error("write failed for " + tmp_path.string());
        }
        std::filesystem::rename(tmp_path, final_path);
        placed.push_back(final_path);
      }
    } catch (...) {
      for (const auto& p : placed) std::filesystem::remove(p, ec);
      throw;
    }
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::string>> pending_;
};

int canonical_row_number(Variant v) {
  switch (v) {
    case Variant::kFedAvg: return 1;
    case Variant::kFh: return 2;
    case Variant::kFhDm: return 3;
    case Variant::kFhFm: return 4;
    case Variant::kDfh: return 5;
  }
  return 0;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("config: invalid JSON: ") + e.what());
  }
  expect_keys(root, "config",
              {"data", "model", "round", "eval", "seeds", "out_dir", "variants"});

  ExperimentConfig cfg;
  if (root.contains("data")) parse_data(root.at("data"), cfg.data);
  if (root.contains("model")) parse_model(root.at("model"), cfg.model);
  if (root.contains("round")) parse_round(root.at("round"), cfg.round);
  if (root.contains("eval")) {
    expect_keys(root.at("eval"), "eval", {"cosine"});
    read_field(root.at("eval"), "cosine", cfg.eval_cosine);
  }
  read_field(root, "seeds", cfg.seeds);
  read_field(root, "out_dir", cfg.out_dir);
  if (root.contains("variants")) {
    std::vector<std::string> names;
    read_field(root, "variants", names);
    cfg.variants.clear();
    for (const std::string& n : names) cfg.variants.push_back(parse_variant(n));
  }
  cfg.model.input_dim = cfg.data.input_dim;
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw config_error("cannot open config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

std::string config_echo_json(const ExperimentConfig& cfg) {
  json root;
  root["data"] = {{"num_domains", cfg.data.num_domains},
                  {"ids_per_domain", cfg.data.ids_per_domain},
                  {"samples_per_id", cfg.data.samples_per_id},
                  {"latent_dim", cfg.data.latent_dim},
                  {"input_dim", cfg.data.input_dim},
                  {"domain_shift_scale", cfg.data.domain_shift_scale},
                  {"noise_scale", cfg.data.noise_scale},
                  {"seed", cfg.data.seed}};
  root["model"] = {{"hidden_dim", cfg.model.hidden_dim},
                   {"feature_dim", cfg.model.feature_dim},
                   {"bn_momentum", cfg.model.bn_momentum},
                   {"bn_eps", cfg.model.bn_eps}};
  std::vector<double> alpha(static_cast<std::size_t>(cfg.round.alpha.size()));
  for (Eigen::Index i = 0; i < cfg.round.alpha.size(); ++i)
    alpha[static_cast<std::size_t>(i)] = cfg.round.alpha[i];
  root["round"] = {{"epochs", cfg.round.epochs},
                   {"iters_per_round", cfg.round.iters_per_round},
                   {"batch_p", cfg.round.batch_p},
                   {"batch_k", cfg.round.batch_k},
                   {"batch_size", cfg.round.batch_size()},
                   {"lr_base", cfg.round.lr.base},
                   {"lr_decay_epochs", cfg.round.lr.decay_epochs},
                   {"lr_decay_factor", cfg.round.lr.decay_factor},
                   {"lambda", cfg.round.lambda},
                   {"margin", cfg.round.margin},
                   {"alpha", alpha},
                   {"variant", to_string(cfg.round.variant)},
                   {"resample_per_iteration", cfg.round.resample_per_iteration},
                   {"hallucinated_loss",
                    cfg.round.hallucinated_loss == HallucinatedLoss::kTriplet
                        ? "triplet"
                        : "cross_entropy"},
                   {"parallel_clients", cfg.round.parallel_clients},
                   {"record_timing", cfg.round.record_timing}};
  root["eval"] = {{"cosine", cfg.eval_cosine}};
  root["seeds"] = cfg.seeds;
  root["out_dir"] = cfg.out_dir;
  std::vector<std::string> variant_names;
  for (Variant v : cfg.variants) variant_names.push_back(to_string(v));
  root["variants"] = variant_names;
  return root.dump(2) + "\n";
}

SimulationResult simulate(const ExperimentConfig& cfg, const GeneratedWorld& world,
                          Variant variant, std::uint64_t seed) {
  auto audit = std::make_shared<AccessAudit>();
  ModelConfig model_cfg = cfg.model;
  model_cfg.input_dim = cfg.data.input_dim;

  // All clients start from the same trunk; heads are per client.
  Rng init_rng = Rng::derive(seed, 0, 0, purpose::kModelInit);
  const ModelParams init = init_model(model_cfg, init_rng);

  std::vector<ClientState> clients;
  clients.reserve(world.sources.size());
  for (std::size_t j = 0; j < world.sources.size(); ++j) {
    ClientState c;
    c.client_id = static_cast<int>(j);
    c.data = ClientData{world.sources[j], c.client_id, audit};
    c.params = init;
    Rng head_rng = Rng::derive(seed, static_cast<std::uint64_t>(j), 0, purpose::kHeadInit);
    c.head = init_head(model_cfg.feature_dim, world.sources[j].identity_count,
                       c.client_id, head_rng);
    clients.push_back(std::move(c));
  }

  RoundConfig round = cfg.round;
  round.variant = variant;
  round.seed = seed;
  EvalContext ctx{&world.target, &world.target_split, cfg.eval_cosine};

  SimulationResult result;
  result.fed = run_federated(clients, ctx, round);
  result.audit_total_reads = audit->total_reads();
  result.audit_cross_reads = audit->cross_reads();
  return result;
}

RunArtifacts run_experiment(const ExperimentConfig& cfg) {
  const GeneratedWorld world = generate_domains(cfg.data);

  std::vector<MetricsRow> rows;
  std::vector<std::pair<std::uint64_t, ModelParams>> finals;
  long long cross_reads = 0;
  for (std::uint64_t seed : cfg.seeds) {
    SimulationResult res = simulate(cfg, world, cfg.round.variant, seed);
    rows.insert(rows.end(), res.fed.log.begin(), res.fed.log.end());
    finals.emplace_back(seed, std::move(res.fed.global));
    cross_reads += res.audit_cross_reads;
  }

  ArtifactWriter writer(cfg.out_dir);
  writer.add("metrics.csv", metrics_csv(rows));
  writer.add("config.json", config_echo_json(cfg));
  RunArtifacts artifacts;
  for (const auto& [seed, model] : finals) {
    const std::string name = "checkpoint-" + std::to_string(seed) + ".fdfh";
    const wire::Bytes bytes = encode_checkpoint(model);
    writer.add(name, std::string(bytes.begin(), bytes.end()));
    artifacts.checkpoints.push_back(writer.path_of(name));
  }
  writer.commit();
  artifacts.metrics_csv = writer.path_of("metrics.csv");
  artifacts.config_echo = writer.path_of("config.json");
  artifacts.audit_cross_reads = cross_reads;
  return artifacts;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg) {
  const GeneratedWorld world = generate_domains(cfg.data);

  std::vector<AblationRow> rows;
  for (Variant variant : cfg.variants) {
    std::vector<double> maps;
    std::vector<double> rank1s;
    for (std::uint64_t seed : cfg.seeds) {
      const SimulationResult res = simulate(cfg, world, variant, seed);
      maps.push_back(res.fed.log.back().target_map);
      rank1s.push_back(res.fed.log.back().target_rank1);
    }
    const auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    const auto stddev = [&](const std::vector<double>& v, double m) {
      double s = 0.0;
      for (double x : v) s += (x - m) * (x - m);
      return std::sqrt(s / static_cast<double>(v.size()));
    };
    AblationRow row;
    row.number = canonical_row_number(variant);
    row.variant = variant;
    row.map_mean = mean(maps);
    row.map_std = stddev(maps, row.map_mean);
    row.rank1_mean = mean(rank1s);
    row.rank1_std = stddev(rank1s, row.rank1_mean);
    rows.push_back(row);
  }

  ArtifactWriter writer(cfg.out_dir);
  writer.add("ablation.csv", ablation_csv(rows));
  writer.add("config.json", config_echo_json(cfg));
  writer.commit();
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "no,variant,fh,dm,fm,dh,map_mean,map_std,rank1_mean,rank1_std\n";
  for (const AblationRow& r : rows) {
    const bool fh = r.variant != Variant::kFedAvg;
    const bool dm = r.variant == Variant::kFhDm;
    const bool fm = r.variant == Variant::kFhFm;
    const bool dh = r.variant == Variant::kDfh;
    out += std::to_string(r.number) + "," + to_string(r.variant) + "," +
           std::to_string(fh ? 1 : 0) + "," + std::to_string(dm ? 1 : 0) + "," +
           std::to_string(fm ? 1 : 0) + "," + std::to_string(dh ? 1 : 0) + "," +
           format_double(r.map_mean) + "," + format_double(r.map_std) + "," +
           format_double(r.rank1_mean) + "," + format_double(r.rank1_std) + "\n";
  }
  return out;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const std::string& param,
                                const std::vector<double>& values) {
  if (param != "lambda" && param != "alpha")
    throw config_error("run_sweep: unknown parameter '" + param + "'");
  if (values.empty()) throw config_error("run_sweep: empty value list");

  const GeneratedWorld world = generate_domains(cfg.data);
  std::vector<SweepRow> rows;
  for (double value : values) {
    ExperimentConfig swept = cfg;
    if (param == "lambda") {
      if (value < 0.0) throw config_error("run_sweep: lambda must be >= 0");
      swept.round.lambda = value;
    } else {
      if (value <= 0.0) throw config_error("run_sweep: alpha entries must be > 0");
      swept.round.alpha = Vector::Ones(cfg.data.num_domains);
      swept.round.alpha[0] = value;
    }
    for (std::uint64_t seed : cfg.seeds) {
      const SimulationResult res = simulate(swept, world, swept.round.variant, seed);
      SweepRow row;
      row.param = param;
      row.value = value;
      row.seed = seed;
      row.target_map = res.fed.log.back().target_map;
      row.target_rank1 = res.fed.log.back().target_rank1;
      rows.push_back(row);
    }
  }

  ArtifactWriter writer(cfg.out_dir);
  writer.add("sweep.csv", sweep_csv(rows));
  writer.add("config.json", config_echo_json(cfg));
  writer.commit();
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "param,value,seed,target_mAP,target_rank1\n";
  for (const SweepRow& r : rows)
    out += r.param + "," + format_double(r.value) + "," + std::to_string(r.seed) + "," +
           format_double(r.target_map) + "," + format_double(r.target_rank1) + "\n";
  return out;
}

std::vector<std::filesystem::path> export_datasets(const ExperimentConfig& cfg,
                                                   const std::filesystem::path& dir) {
  const GeneratedWorld world = generate_domains(cfg.data);
  ArtifactWriter writer(dir);
  std::vector<std::filesystem::path> paths;
  for (std::size_t j = 0; j < world.sources.size(); ++j) {
    const std::string name = "source_" + std::to_string(j) + ".fdat";
    const wire::Bytes bytes = encode_dataset(world.sources[j]);
    writer.add(name, std::string(bytes.begin(), bytes.end()));
    paths.push_back(writer.path_of(name));
  }
  const wire::Bytes target_bytes = encode_dataset(world.target);
  writer.add("target.fdat", std::string(target_bytes.begin(), target_bytes.end()));
  paths.push_back(writer.path_of("target.fdat"));
  writer.commit();
  return paths;
}

}  // namespace fedhal
