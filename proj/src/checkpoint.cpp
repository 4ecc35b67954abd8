#include "fedhal/checkpoint.hpp"

#include <fstream>
#include <map>
#include <string>

#include "fedhal/error.hpp"

namespace fedhal {

namespace {

constexpr char kMagic[4] = {'F', 'D', 'F', 'H'};
constexpr std::uint32_t kVersion = 1;

void put_tensor(wire::Bytes& out, const std::string& name, const Matrix& m) {
  wire::put_u32(out, static_cast<std::uint32_t>(name.size()));
  wire::put_bytes(out, name.data(), name.size());
  wire::put_u32(out, 2);
  wire::put_u64(out, static_cast<std::uint64_t>(m.rows()));
  wire::put_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) wire::put_f64(out, m(r, c));
}

void put_tensor(wire::Bytes& out, const std::string& name, const Vector& v) {
  wire::put_u32(out, static_cast<std::uint32_t>(name.size()));
  wire::put_bytes(out, name.data(), name.size());
  wire::put_u32(out, 1);
  wire::put_u64(out, static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) wire::put_f64(out, v[i]);
}

void put_scalar(wire::Bytes& out, const std::string& name, double v) {
  wire::put_u32(out, static_cast<std::uint32_t>(name.size()));
  wire::put_bytes(out, name.data(), name.size());
  wire::put_u32(out, 0);
  wire::put_f64(out, v);
}

struct RawTensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> values;
};

Matrix as_matrix(const std::map<std::string, RawTensor>& tensors, const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw parse_error("missing tensor '" + name + "'", 0);
  const RawTensor& t = it->second;
  if (t.dims.size() != 2) throw parse_error("tensor '" + name + "' is not rank 2", 0);
  Matrix m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = t.values[k++];
  return m;
}

Vector as_vector(const std::map<std::string, RawTensor>& tensors, const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw parse_error("missing tensor '" + name + "'", 0);
  const RawTensor& t = it->second;
  if (t.dims.size() != 1) throw parse_error("tensor '" + name + "' is not rank 1", 0);
  Vector v(static_cast<Eigen::Index>(t.dims[0]));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = t.values[static_cast<std::size_t>(i)];
  return v;
}

double as_scalar(const std::map<std::string, RawTensor>& tensors, const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw parse_error("missing tensor '" + name + "'", 0);
  if (!it->second.dims.empty()) throw parse_error("tensor '" + name + "' is not rank 0", 0);
  return it->second.values.at(0);
}

}  // namespace

wire::Bytes encode_checkpoint(const ModelParams& params) {
  wire::Bytes out;
  wire::put_bytes(out, kMagic, 4);
  wire::put_u32(out, kVersion);
  wire::put_u32(out, 8);
  put_tensor(out, "w1", params.w1);
  put_tensor(out, "b1", params.b1);
  put_tensor(out, "w2", params.w2);
  put_tensor(out, "b2", params.b2);
  put_tensor(out, "bn_running_mean", params.bn_running_mean);
  put_tensor(out, "bn_running_var", params.bn_running_var);
  put_scalar(out, "bn_momentum", params.bn_momentum);
  put_scalar(out, "bn_eps", params.bn_eps);
  return out;
}

ModelParams decode_checkpoint(const wire::Bytes& bytes) {
  wire::Reader r(bytes);
  if (r.str(4, "magic") != std::string(kMagic, 4)) throw parse_error("bad checkpoint magic", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kVersion)
    throw parse_error("unsupported checkpoint version " + std::to_string(version), 4);
  const std::uint32_t count = r.u32("tensor count");

  std::map<std::string, RawTensor> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = r.u32("name length");
    const std::string name = r.str(name_len, "name");
    const std::uint32_t rank = r.u32("rank");
    if (rank > 2) throw parse_error("tensor '" + name + "' has unsupported rank", r.offset());
    RawTensor raw;
    std::uint64_t total = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      raw.dims.push_back(r.u64("dim"));
      total *= raw.dims.back();
    }
    if (total > (1ull << 32)) throw parse_error("tensor '" + name + "' too large", r.offset());
    raw.values.reserve(total);
    for (std::uint64_t i = 0; i < total; ++i) raw.values.push_back(r.f64("value"));
    tensors.emplace(name, std::move(raw));
  }
  r.expect_end("checkpoint");

  ModelParams p;
  p.w1 = as_matrix(tensors, "w1");
  p.b1 = as_vector(tensors, "b1");
  p.w2 = as_matrix(tensors, "w2");
  p.b2 = as_vector(tensors, "b2");
  p.bn_running_mean = as_vector(tensors, "bn_running_mean");
  p.bn_running_var = as_vector(tensors, "bn_running_var");
  p.bn_momentum = as_scalar(tensors, "bn_momentum");
  p.bn_eps = as_scalar(tensors, "bn_eps");
  if (p.w1.cols() != p.b1.size() || p.w2.rows() != p.b1.size() ||
      p.w2.cols() != p.b2.size() || p.bn_running_mean.size() != p.b2.size() ||
      p.bn_running_var.size() != p.b2.size())
    throw parse_error("inconsistent tensor shapes", 0);
  return p;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  const wire::Bytes bytes = encode_checkpoint(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw io_error("write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path.string());
  wire::Bytes bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace fedhal
