#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <vector>

#include "fedhal/rng.hpp"
#include "fedhal/types.hpp"
#include "fedhal/wire.hpp"

namespace fedhal {

/// One domain's dataset. Labels are dense in [0, identity_count); the global
/// identity of local label l is identity_offset + l, which keeps label spaces
/// disjoint across domains.
struct DomainDataset {
  Matrix samples;  // M x D_in
  IntVector labels;
  int domain_id = 0;
  int identity_count = 0;
  int identity_offset = 0;

  Eigen::Index sample_count() const { return samples.rows(); }
  Eigen::Index input_dim() const { return samples.cols(); }
};

struct SyntheticConfig {
  int num_domains = 3;  // source domains; one extra target domain is generated
  int ids_per_domain = 20;
  int samples_per_id = 12;
  int latent_dim = 8;
  int input_dim = 32;
  double domain_shift_scale = 1.0;
  double noise_scale = 0.35;
  std::uint64_t seed = 1;
};

/// Query/gallery index split of a target dataset: disjoint, one query per
/// identity, every query identity present in the gallery.
struct RetrievalSplit {
  std::vector<int> query;
  std::vector<int> gallery;
};

struct GeneratedWorld {
  std::vector<DomainDataset> sources;
  DomainDataset target;
  RetrievalSplit target_split;
};

/// Deterministic multi-domain world. Each domain applies its own affine map
/// (a shared orthonormal base perturbed by a scaled orthonormal matrix, plus a
/// scaled translation) to per-identity latent prototypes; samples add
/// isotropic Gaussian noise. Identity label spaces are pairwise disjoint.
GeneratedWorld generate_domains(const SyntheticConfig& cfg);

/// First sample of every identity becomes the query; the rest the gallery.
RetrievalSplit make_retrieval_split(const DomainDataset& ds);

/// Indices of a PK batch: p distinct identities, k samples each, drawn
/// without replacement within the batch.
std::vector<int> pk_sample_batch(const DomainDataset& ds, int p, int k, Rng& rng);

/// Dataset/embedding container format: magic "FDAT", version u32, domain_id
/// u32, identity_count u32, identity_offset u32, rows u64, cols u64, row-major
/// little-endian 64-bit reals, then rows labels as u32.
wire::Bytes encode_dataset(const DomainDataset& ds);
DomainDataset decode_dataset(const wire::Bytes& bytes);
void save_dataset(const DomainDataset& ds, const std::filesystem::path& path);
DomainDataset load_dataset(const std::filesystem::path& path);

/// Records who reads which dataset. The federated protocol's privacy surface
/// is DFS payloads and model parameters only, so any cross-owner read of raw
/// samples is a violation.
class AccessAudit {
 public:
  void record(int reader, int owner) {
    std::lock_guard<std::mutex> lock(mutex_);
    ++total_;
    if (reader != owner) ++cross_;
  }
  long long total_reads() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return total_;
  }
  long long cross_reads() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return cross_;
  }

 private:
  mutable std::mutex mutex_;
  long long total_ = 0;
  long long cross_ = 0;
};

/// A dataset handle bound to its owning client; every access states the
/// reader and is recorded by the audit (when attached).
struct ClientData {
  DomainDataset dataset;
  int owner = 0;
  std::shared_ptr<AccessAudit> audit;

  const DomainDataset& view(int reader) const {
    if (audit) audit->record(reader, owner);
    return dataset;
  }
};

}  // namespace fedhal
