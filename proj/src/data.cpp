#include "fedhal/data.hpp"

#include <Eigen/Dense>
#include <fstream>
#include <numeric>

#include "fedhal/error.hpp"

namespace fedhal {

namespace {

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

// Thin Q factor of a Gaussian matrix: orthonormal columns.
Matrix random_orthonormal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const Matrix g = gaussian_matrix(rows, cols, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  return q;
}

void validate_config(const SyntheticConfig& cfg) {
  if (cfg.num_domains < 2 || cfg.ids_per_domain < 2 || cfg.samples_per_id < 2 ||
      cfg.latent_dim < 2 || cfg.input_dim < 2)
    throw config_error("generate_domains: all counts must be >= 2");
  if (cfg.domain_shift_scale < 0.0 || cfg.noise_scale < 0.0)
    throw config_error("generate_domains: scales must be >= 0");
  if (cfg.input_dim < cfg.latent_dim)
    throw config_error("generate_domains: input_dim must be >= latent_dim");
}

DomainDataset make_domain(int domain_id, int identity_offset, const Matrix& base,
                          const SyntheticConfig& cfg, Rng& rng) {
  const Matrix perturbation = random_orthonormal(cfg.input_dim, cfg.latent_dim, rng);
  const Matrix map = base + cfg.domain_shift_scale * perturbation;
  Vector shift(cfg.input_dim);
  for (Eigen::Index i = 0; i < shift.size(); ++i)
    shift[i] = cfg.domain_shift_scale * rng.normal();

  DomainDataset ds;
  ds.domain_id = domain_id;
  ds.identity_count = cfg.ids_per_domain;
  ds.identity_offset = identity_offset;
  const Eigen::Index total = static_cast<Eigen::Index>(cfg.ids_per_domain) * cfg.samples_per_id;
  ds.samples.resize(total, cfg.input_dim);
  ds.labels.resize(total);

  Eigen::Index row = 0;
  for (int id = 0; id < cfg.ids_per_domain; ++id) {
    Vector latent(cfg.latent_dim);
    for (Eigen::Index i = 0; i < latent.size(); ++i) latent[i] = rng.normal();
    const Vector prototype = map * latent + shift;
    for (int s = 0; s < cfg.samples_per_id; ++s) {
      Vector x = prototype;
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += cfg.noise_scale * rng.normal();
      ds.samples.row(row) = x.transpose();
      ds.labels[row] = id;
      ++row;
    }
  }
  return ds;
}

}  // namespace

GeneratedWorld generate_domains(const SyntheticConfig& cfg) {
  validate_config(cfg);
  Rng rng = Rng::derive(cfg.seed, 0, 0, purpose::kData);
  const Matrix base = random_orthonormal(cfg.input_dim, cfg.latent_dim, rng);

  GeneratedWorld world;
  world.sources.reserve(cfg.num_domains);
  for (int j = 0; j < cfg.num_domains; ++j)
    world.sources.push_back(make_domain(j, j * cfg.ids_per_domain, base, cfg, rng));
  world.target =
      make_domain(cfg.num_domains, cfg.num_domains * cfg.ids_per_domain, base, cfg, rng);
  world.target_split = make_retrieval_split(world.target);
  return world;
}

RetrievalSplit make_retrieval_split(const DomainDataset& ds) {
  RetrievalSplit split;
  std::vector<bool> seen(static_cast<std::size_t>(ds.identity_count), false);
  for (Eigen::Index i = 0; i < ds.sample_count(); ++i) {
    const auto id = static_cast<std::size_t>(ds.labels[i]);
    if (!seen[id]) {
      seen[id] = true;
      split.query.push_back(static_cast<int>(i));
    } else {
      split.gallery.push_back(static_cast<int>(i));
    }
  }
  for (bool s : seen)
    if (!s) throw data_error("make_retrieval_split: labels not dense");
  return split;
}

std::vector<int> pk_sample_batch(const DomainDataset& ds, int p, int k, Rng& rng) {
  if (p < 2) throw sampling_error("pk_sample_batch: need p >= 2 identities");
  if (k < 2) throw sampling_error("pk_sample_batch: need k >= 2 samples per identity");
  if (p > ds.identity_count)
    throw sampling_error("pk_sample_batch: p exceeds identity count");

  std::vector<std::vector<int>> per_id(static_cast<std::size_t>(ds.identity_count));
  for (Eigen::Index i = 0; i < ds.sample_count(); ++i)
    per_id[static_cast<std::size_t>(ds.labels[i])].push_back(static_cast<int>(i));
  for (const auto& ids : per_id)
    if (static_cast<int>(ids.size()) < k)
      throw sampling_error("pk_sample_batch: an identity has fewer than k samples");

  // Partial Fisher-Yates over identities, then over each identity's samples.
  std::vector<int> identities(static_cast<std::size_t>(ds.identity_count));
  std::iota(identities.begin(), identities.end(), 0);
  for (int i = 0; i < p; ++i) {
    const auto j = i + static_cast<int>(rng.uniform_int(identities.size() - static_cast<std::size_t>(i)));
    std::swap(identities[static_cast<std::size_t>(i)], identities[static_cast<std::size_t>(j)]);
  }

  std::vector<int> batch;
  batch.reserve(static_cast<std::size_t>(p) * static_cast<std::size_t>(k));
  for (int i = 0; i < p; ++i) {
    auto& pool = per_id[static_cast<std::size_t>(identities[static_cast<std::size_t>(i)])];
    for (int s = 0; s < k; ++s) {
      const auto j = s + static_cast<int>(rng.uniform_int(pool.size() - static_cast<std::size_t>(s)));
      std::swap(pool[static_cast<std::size_t>(s)], pool[static_cast<std::size_t>(j)]);
      batch.push_back(pool[static_cast<std::size_t>(s)]);
    }
  }
  return batch;
}

namespace {
constexpr char kDatasetMagic[4] = {'F', 'D', 'A', 'T'};
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

wire::Bytes encode_dataset(const DomainDataset& ds) {
  wire::Bytes out;
  wire::put_bytes(out, kDatasetMagic, 4);
  wire::put_u32(out, kDatasetVersion);
  wire::put_u32(out, static_cast<std::uint32_t>(ds.domain_id));
  wire::put_u32(out, static_cast<std::uint32_t>(ds.identity_count));
  wire::put_u32(out, static_cast<std::uint32_t>(ds.identity_offset));
  wire::put_u64(out, static_cast<std::uint64_t>(ds.samples.rows()));
  wire::put_u64(out, static_cast<std::uint64_t>(ds.samples.cols()));
  for (Eigen::Index r = 0; r < ds.samples.rows(); ++r)
    for (Eigen::Index c = 0; c < ds.samples.cols(); ++c)
      wire::put_f64(out, ds.samples(r, c));
  for (Eigen::Index i = 0; i < ds.labels.size(); ++i)
    wire::put_u32(out, static_cast<std::uint32_t>(ds.labels[i]));
  return out;
}

DomainDataset decode_dataset(const wire::Bytes& bytes) {
  wire::Reader r(bytes);
  if (r.str(4, "magic") != std::string(kDatasetMagic, 4))
    throw parse_error("bad dataset magic", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kDatasetVersion)
    throw parse_error("unsupported dataset version " + std::to_string(version), 4);

  DomainDataset ds;
  ds.domain_id = static_cast<int>(r.u32("domain_id"));
  ds.identity_count = static_cast<int>(r.u32("identity_count"));
  ds.identity_offset = static_cast<int>(r.u32("identity_offset"));
  const std::uint64_t rows = r.u64("rows");
  const std::uint64_t cols = r.u64("cols");
  if (rows > (1ull << 32) || cols > (1ull << 20))
    throw parse_error("dataset too large", r.offset());
  ds.samples.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < ds.samples.rows(); ++i)
    for (Eigen::Index c = 0; c < ds.samples.cols(); ++c)
      ds.samples(i, c) = r.f64("sample");
  ds.labels.resize(static_cast<Eigen::Index>(rows));
  for (Eigen::Index i = 0; i < ds.labels.size(); ++i) {
    const std::uint32_t label = r.u32("label");
    if (label >= static_cast<std::uint32_t>(ds.identity_count))
      throw parse_error("label out of range", r.offset() - 4);
    ds.labels[i] = static_cast<int>(label);
  }
  r.expect_end("dataset payload");
  return ds;
}

void save_dataset(const DomainDataset& ds, const std::filesystem::path& path) {
  const wire::Bytes bytes = encode_dataset(ds);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw io_error("write failed for " + path.string());
}

DomainDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path.string());
  wire::Bytes bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

}  // namespace fedhal
