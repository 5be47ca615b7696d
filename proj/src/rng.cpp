#include "fhvae/rng.hpp"

#include <cmath>
#include <numbers>

namespace fhvae {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

double RandomStream::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // u1 in (0, 1] so the log is finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

std::size_t RandomStream::uniform_index(std::size_t n) {
  if (n == 0) throw ContractError("uniform_index: n must be >= 1");
  return static_cast<std::size_t>(next_u64() % n);
}

std::vector<std::size_t> RandomStream::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = uniform_index(i);
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

Tensor RandomStream::normal_tensor(const Shape& shape, double stddev) {
  Tensor t(shape);
  for (double& v : t.data) v = stddev * normal();
  return t;
}

Tensor RandomStream::uniform_tensor(const Shape& shape, double lo, double hi) {
  Tensor t(shape);
  for (double& v : t.data) v = uniform(lo, hi);
  return t;
}

RandomStream RandomStream::fork(std::uint64_t stream) const {
  return RandomStream(splitmix64(seed_ ^ splitmix64(stream + 1)));
}

}  // namespace fhvae
