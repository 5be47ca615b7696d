#pragma once

#include <string>
#include <vector>

#include "fhvae/model_config.hpp"
#include "fhvae/tensor.hpp"

namespace fhvae {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Versioned binary container: magic "FHVD", format version u32, the
// serialized ModelConfig, then named tensors until end of file. Each tensor
// is name length u32, name bytes, rank u32, extents u64 each, and the values
// as little-endian 64-bit floats. Round trips are bit-exact.
struct Container {
  ModelConfig config;
  std::vector<NamedTensor> tensors;
};

void write_container(const std::string& path, const ModelConfig& config,
                     const std::vector<NamedTensor>& tensors);
Container read_container(const std::string& path);

}  // namespace fhvae
