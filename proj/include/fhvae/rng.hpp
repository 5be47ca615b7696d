#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fhvae/tensor.hpp"

namespace fhvae {

// Deterministic random stream. The generator is std::mt19937_64 (fully
// specified by the standard); the distributions are implemented here so that
// sampled sequences are pinned rather than left to the standard library.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform index in [0, n). Requires n >= 1.
  std::size_t uniform_index(std::size_t n);

  // Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

  Tensor normal_tensor(const Shape& shape, double stddev = 1.0);
  Tensor uniform_tensor(const Shape& shape, double lo, double hi);

  // Independent substream derived from the construction seed; consuming from
  // this stream does not affect the fork.
  RandomStream fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_ = 0;
  std::mt19937_64 gen_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace fhvae
