#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "fedhal/data.hpp"
#include "fedhal/error.hpp"
#include "fedhal/losses.hpp"

using namespace fedhal;

TEST_CASE("degenerate generator: every sample equals its identity prototype") {
  SyntheticConfig cfg;
  cfg.num_domains = 2;
  cfg.ids_per_domain = 3;
  cfg.samples_per_id = 4;
  cfg.domain_shift_scale = 0.0;
  cfg.noise_scale = 0.0;
  const GeneratedWorld world = generate_domains(cfg);
  for (const DomainDataset& ds : world.sources) {
    std::map<int, Matrix> prototype;
    for (Eigen::Index i = 0; i < ds.sample_count(); ++i) {
      const auto it = prototype.find(ds.labels[i]);
      if (it == prototype.end())
        prototype[ds.labels[i]] = ds.samples.row(i);
      else
        CHECK(Matrix(ds.samples.row(i)) == it->second);
    }
  }
}

TEST_CASE("identity label spaces are pairwise disjoint across domains") {
  SyntheticConfig cfg;
  const GeneratedWorld world = generate_domains(cfg);
  std::set<int> seen;
  const auto check_domain = [&seen](const DomainDataset& ds) {
    for (Eigen::Index i = 0; i < ds.sample_count(); ++i) {
      CHECK(ds.labels[i] >= 0);
      CHECK(ds.labels[i] < ds.identity_count);
    }
    for (int id = 0; id < ds.identity_count; ++id)
      CHECK(seen.insert(ds.identity_offset + id).second);
  };
  for (const DomainDataset& ds : world.sources) check_domain(ds);
  check_domain(world.target);
}

TEST_CASE("noise-free shifted domains are perfectly separable") {
  SyntheticConfig cfg;
  cfg.num_domains = 2;
  cfg.ids_per_domain = 4;
  cfg.samples_per_id = 3;
  cfg.noise_scale = 0.0;
  cfg.domain_shift_scale = 1.0;
  const GeneratedWorld world = generate_domains(cfg);
  const DomainDataset& ds = world.sources[0];
  for (Eigen::Index i = 0; i < ds.sample_count(); ++i)
    for (Eigen::Index j = i + 1; j < ds.sample_count(); ++j) {
      const double dist = (ds.samples.row(i) - ds.samples.row(j)).norm();
      if (ds.labels[i] == ds.labels[j])
        CHECK(dist == 0.0);
      else
        CHECK(dist > 0.0);
    }
}

TEST_CASE("regeneration with the same seed is byte-identical") {
  SyntheticConfig cfg;
  cfg.seed = 77;
  const GeneratedWorld a = generate_domains(cfg);
  const GeneratedWorld b = generate_domains(cfg);
  CHECK(encode_dataset(a.target) == encode_dataset(b.target));
  for (std::size_t i = 0; i < a.sources.size(); ++i)
    CHECK(encode_dataset(a.sources[i]) == encode_dataset(b.sources[i]));
  CHECK(a.target_split.query == b.target_split.query);
  CHECK(a.target_split.gallery == b.target_split.gallery);
}

TEST_CASE("retrieval split is disjoint and covers every identity") {
  SyntheticConfig cfg;
  const GeneratedWorld world = generate_domains(cfg);
  const RetrievalSplit& split = world.target_split;
  CHECK(static_cast<int>(split.query.size()) == cfg.ids_per_domain);
  std::set<int> query_set(split.query.begin(), split.query.end());
  for (int g : split.gallery) CHECK(query_set.find(g) == query_set.end());
  CHECK(split.query.size() + split.gallery.size() ==
        static_cast<std::size_t>(world.target.sample_count()));
  std::set<int> gallery_ids;
  for (int g : split.gallery) gallery_ids.insert(world.target.labels[g]);
  for (int q : split.query)
    CHECK(gallery_ids.count(world.target.labels[q]) == 1);
}

TEST_CASE("invalid synthetic configs are rejected") {
  SyntheticConfig cfg;
  cfg.ids_per_domain = 1;
  CHECK_THROWS_AS(generate_domains(cfg), config_error);
  cfg = SyntheticConfig{};
  cfg.noise_scale = -0.1;
  CHECK_THROWS_AS(generate_domains(cfg), config_error);
  cfg = SyntheticConfig{};
  cfg.latent_dim = 64;  // exceeds input_dim
  CHECK_THROWS_AS(generate_domains(cfg), config_error);
}

TEST_CASE("pk batches have exactly p identities with k instances each") {
  SyntheticConfig cfg;
  cfg.num_domains = 2;
  cfg.ids_per_domain = 3;
  cfg.samples_per_id = 4;
  const GeneratedWorld world = generate_domains(cfg);
  Rng rng(1);
  const std::vector<int> batch = pk_sample_batch(world.sources[0], 2, 2, rng);
  CHECK(batch.size() == 4);
  std::map<int, int> counts;
  std::set<int> distinct(batch.begin(), batch.end());
  CHECK(distinct.size() == 4);  // no duplicate samples inside a batch
  for (int idx : batch) ++counts[world.sources[0].labels[idx]];
  CHECK(counts.size() == 2);
  for (const auto& [label, count] : counts) CHECK(count == 2);
}

TEST_CASE("pk sampling with p equal to the identity count covers all") {
  SyntheticConfig cfg;
  cfg.num_domains = 2;
  cfg.ids_per_domain = 5;
  cfg.samples_per_id = 4;
  const GeneratedWorld world = generate_domains(cfg);
  Rng rng(2);
  const std::vector<int> batch = pk_sample_batch(world.sources[1], 5, 2, rng);
  std::set<int> labels;
  for (int idx : batch) labels.insert(world.sources[1].labels[idx]);
  CHECK(labels.size() == 5);
}

TEST_CASE("pk sampling is fair across identities") {
  SyntheticConfig cfg;
  cfg.num_domains = 2;
  cfg.ids_per_domain = 10;
  cfg.samples_per_id = 4;
  const GeneratedWorld world = generate_domains(cfg);
  Rng rng(3);
  const int batches = 10000, p = 4;
  std::vector<int> hits(10, 0);
  for (int b = 0; b < batches; ++b) {
    const std::vector<int> batch = pk_sample_batch(world.sources[0], p, 2, rng);
    std::set<int> labels;
    for (int idx : batch) labels.insert(world.sources[0].labels[idx]);
    for (int label : labels) ++hits[static_cast<std::size_t>(label)];
  }
  const double expected = batches * (static_cast<double>(p) / 10.0);
  const double sigma = std::sqrt(batches * (p / 10.0) * (1.0 - p / 10.0));
  for (int id = 0; id < 10; ++id)
    CHECK(std::abs(hits[static_cast<std::size_t>(id)] - expected) <= 3.0 * sigma);
}

TEST_CASE("every pk batch satisfies the triplet preconditions") {
  SyntheticConfig cfg;
  cfg.num_domains = 2;
  cfg.ids_per_domain = 6;
  cfg.samples_per_id = 4;
  const GeneratedWorld world = generate_domains(cfg);
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<int> batch = pk_sample_batch(world.sources[0], 3, 2, rng);
    Matrix f(static_cast<Eigen::Index>(batch.size()), world.sources[0].input_dim());
    IntVector y(static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      f.row(static_cast<Eigen::Index>(i)) = world.sources[0].samples.row(batch[i]);
      y[static_cast<Eigen::Index>(i)] = world.sources[0].labels[batch[i]];
    }
    CHECK_NOTHROW(triplet_loss(f, y, 0.5));
  }
}

TEST_CASE("infeasible pk requests are rejected") {
  SyntheticConfig cfg;
  cfg.num_domains = 2;
  cfg.ids_per_domain = 3;
  cfg.samples_per_id = 4;
  const GeneratedWorld world = generate_domains(cfg);
  Rng rng(5);
  CHECK_THROWS_AS(pk_sample_batch(world.sources[0], 4, 2, rng), sampling_error);
  CHECK_THROWS_AS(pk_sample_batch(world.sources[0], 2, 5, rng), sampling_error);
  CHECK_THROWS_AS(pk_sample_batch(world.sources[0], 1, 2, rng), sampling_error);
}

TEST_CASE("dataset files round-trip bitwise and reject malformed payloads") {
  SyntheticConfig cfg;
  cfg.num_domains = 2;
  cfg.ids_per_domain = 3;
  cfg.samples_per_id = 2;
  const GeneratedWorld world = generate_domains(cfg);
  const DomainDataset& ds = world.sources[0];

  const wire::Bytes bytes = encode_dataset(ds);
  const DomainDataset back = decode_dataset(bytes);
  CHECK(back.samples == ds.samples);
  CHECK(back.labels == ds.labels);
  CHECK(back.domain_id == ds.domain_id);
  CHECK(back.identity_count == ds.identity_count);
  CHECK(back.identity_offset == ds.identity_offset);

  wire::Bytes truncated = bytes;
  truncated.resize(truncated.size() - 2);
  CHECK_THROWS_AS(decode_dataset(truncated), parse_error);
  wire::Bytes bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_dataset(bad), parse_error);

  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "fedhal_ds_test.fdat";
  save_dataset(ds, path);
  const DomainDataset loaded = load_dataset(path);
  CHECK(loaded.samples == ds.samples);
  std::filesystem::remove(path);
}

TEST_CASE("access audit counts cross-owner reads") {
  SyntheticConfig cfg;
  cfg.num_domains = 2;
  cfg.ids_per_domain = 3;
  cfg.samples_per_id = 2;
  const GeneratedWorld world = generate_domains(cfg);
  auto audit = std::make_shared<AccessAudit>();
  ClientData handle{world.sources[0], 0, audit};

  handle.view(0);
  handle.view(0);
  CHECK(audit->total_reads() == 2);
  CHECK(audit->cross_reads() == 0);
  handle.view(1);  // another client peeks: must be flagged
  CHECK(audit->cross_reads() == 1);
}
