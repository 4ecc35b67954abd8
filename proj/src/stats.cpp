#include "fedhal/stats.hpp"

#include <algorithm>
#include <cmath>

#include "fedhal/error.hpp"

namespace fedhal {

namespace {

// Per-dimension mean and population variance of the rows of m.
void row_population_stats(const Matrix& m, Vector& mean, Vector& var) {
  const double n = static_cast<double>(m.rows());
  mean = m.colwise().sum().transpose() / n;
  var = Vector::Zero(m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Vector centered = m.row(r).transpose() - mean;
    var += centered.cwiseProduct(centered);
  }
  var /= n;
}

}  // namespace

IdStats compute_ifs(const MatrixRef& features, const IntVectorRef& labels) {
  if (features.rows() == 0) throw data_error("compute_ifs: empty dataset");
  if (features.rows() != labels.size())
    throw dimension_error("compute_ifs: feature/label count mismatch");

  // Rows ordered by ascending identity label so the result is independent of
  // sample order.
  std::map<int, std::vector<Eigen::Index>> by_id;
  for (Eigen::Index i = 0; i < labels.size(); ++i) by_id[labels[i]].push_back(i);

  IdStats out;
  const Eigen::Index d = features.cols();
  out.means.resize(static_cast<Eigen::Index>(by_id.size()), d);
  out.variances.resize(static_cast<Eigen::Index>(by_id.size()), d);

  Eigen::Index row = 0;
  for (auto& [label, indices] : by_id) {
    std::sort(indices.begin(), indices.end());
    const double n = static_cast<double>(indices.size());
    Vector mean = Vector::Zero(d);
    for (Eigen::Index i : indices) mean += features.row(i).transpose();
    mean /= n;
    Vector var = Vector::Zero(d);
    for (Eigen::Index i : indices) {
      const Vector centered = features.row(i).transpose() - mean;
      var += centered.cwiseProduct(centered);
    }
    var /= n;
    out.means.row(row) = mean.transpose();
    out.variances.row(row) = var.transpose();
    out.id_index[label] = static_cast<int>(row);
    ++row;
  }
  return out;
}

DomainStats estimate_dfs(const IdStats& ifs) {
  if (ifs.identity_count() < 2)
    throw data_error("estimate_dfs: need at least two identities");
  DomainStats dfs;
  row_population_stats(ifs.means, dfs.mu_hat, dfs.sigma_hat_sq);
  row_population_stats(ifs.variances, dfs.mu_tilde, dfs.sigma_tilde_sq);
  return dfs;
}

DomainVectors sample_domain_vectors(const DomainStats& dfs, Rng& rng) {
  DomainVectors out;
  out.mu = sample_gaussian(dfs.mu_hat, dfs.sigma_hat_sq, rng);
  out.sigma_sq =
      sample_gaussian(dfs.mu_tilde, dfs.sigma_tilde_sq, rng).cwiseMax(kVarianceFloor);
  return out;
}

namespace {
constexpr char kDfsMagic[3] = {'D', 'F', 'S'};
constexpr std::uint8_t kDfsVersion = '1';
}  // namespace

wire::Bytes serialize_dfs(const DomainStats& dfs) {
  wire::Bytes out;
  wire::put_bytes(out, kDfsMagic, 3);
  out.push_back(kDfsVersion);
  wire::put_u32(out, dfs.client_id);
  wire::put_u32(out, dfs.epoch_stamp);
  wire::put_u32(out, static_cast<std::uint32_t>(dfs.dim()));
  for (const Vector* v : {&dfs.mu_hat, &dfs.sigma_hat_sq, &dfs.mu_tilde, &dfs.sigma_tilde_sq})
    for (Eigen::Index i = 0; i < v->size(); ++i) wire::put_f64(out, (*v)[i]);
  return out;
}

DomainStats parse_dfs(const wire::Bytes& bytes) {
  wire::Reader r(bytes);
  const std::string magic = r.str(3, "magic");
  if (magic != std::string(kDfsMagic, 3)) throw parse_error("bad DFS magic", 0);
  const std::string version = r.str(1, "version");
  if (version[0] != kDfsVersion)
    throw parse_error("unsupported DFS version '" + version + "'", 3);

  DomainStats dfs;
  dfs.client_id = r.u32("client_id");
  dfs.epoch_stamp = r.u32("epoch");
  const std::uint32_t d = r.u32("dim");
  for (Vector* v : {&dfs.mu_hat, &dfs.sigma_hat_sq, &dfs.mu_tilde, &dfs.sigma_tilde_sq}) {
    v->resize(d);
    for (std::uint32_t i = 0; i < d; ++i) (*v)[i] = r.f64("statistic");
  }
  r.expect_end("DFS payload");
  return dfs;
}

}  // namespace fedhal
