#include "fhvae/model_config.hpp"

#include "fhvae/tensor.hpp"

namespace fhvae {

void ModelConfig::validate() const {
  if (feat_dim < 1 || seg_len < 1 || dim_z1 < 1 || dim_z2 < 1 || hidden_dim < 1) {
    throw ContractError("model config: all dimensions must be >= 1");
  }
  if (num_layers < 1 || num_layers > 4) {
    throw ContractError("model config: num_layers must be in [1, 4]");
  }
  if (!(var_mu2 > 0.0) || !(var_z1 > 0.0) || !(var_z2 > 0.0)) {
    throw ContractError("model config: prior variances must be positive");
  }
  if (!(alpha >= 0.0)) {
    throw ContractError("model config: alpha must be non-negative");
  }
}

ModelConfig ModelConfig::production_shape() {
  ModelConfig c;
  c.feat_dim = 80;
  c.seg_len = 20;
  c.dim_z1 = 32;
  c.dim_z2 = 32;
  c.hidden_dim = 256;
  c.num_layers = 2;
  return c;
}

}  // namespace fhvae
