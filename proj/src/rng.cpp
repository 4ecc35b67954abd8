#include "fedhal/rng.hpp"

#include <cmath>

#include "fedhal/error.hpp"

namespace fedhal {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_key(std::uint64_t h, std::uint64_t v) {
  std::uint64_t s = v;
  h ^= splitmix64(s) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  std::uint64_t t = h;
  return splitmix64(t);
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& word : state_) word = splitmix64(x);
}

Rng Rng::derive(std::uint64_t global_seed, std::uint64_t client_id,
                std::uint64_t epoch, std::uint64_t purpose_tag) {
  std::uint64_t key = 0x243f6a8885a308d3ULL ^ global_seed;
  key = mix_key(key, client_id + 1);
  key = mix_key(key, epoch + 1);
  key = mix_key(key, purpose_tag + 1);
  return Rng(key);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_pos() { return 1.0 - uniform(); }

double Rng::normal() {
  const double u1 = uniform_pos();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double Rng::gamma(double alpha) {
  if (!(alpha > 0.0)) throw domain_error("gamma: alpha must be positive");
  if (alpha < 1.0) {
    // Boost: Gamma(a) = Gamma(a + 1) * U^(1/a).
    const double u = uniform_pos();
    return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_pos();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw domain_error("uniform_int: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x < limit) return x % n;
  }
}

Vector sample_gaussian(const VectorRef& mean, const VectorRef& variance, Rng& rng) {
  if (mean.size() != variance.size())
    throw dimension_error("sample_gaussian: mean and variance lengths differ");
  if ((variance.array() < 0.0).any())
    throw domain_error("sample_gaussian: negative variance entry");
  Vector out(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i)
    out[i] = mean[i] + std::sqrt(variance[i]) * rng.normal();
  return out;
}

Vector sample_dirichlet(const VectorRef& alpha, Rng& rng) {
  if (alpha.size() == 0) throw domain_error("sample_dirichlet: empty alpha");
  if ((alpha.array() <= 0.0).any())
    throw domain_error("sample_dirichlet: alpha entries must be positive");
  Vector draws(alpha.size());
  for (Eigen::Index i = 0; i < alpha.size(); ++i) draws[i] = rng.gamma(alpha[i]);
  const double total = draws.sum();
  return draws / total;
}

}  // namespace fedhal
