#pragma once

#include <cstddef>

namespace fhvae {

// Shapes and priors of the generative model. The defaults are the fast desk
// geometry; production_shape() gives the production-scale configuration.
struct ModelConfig {
  std::size_t feat_dim = 8;
  std::size_t seg_len = 10;
  std::size_t dim_z1 = 8;
  std::size_t dim_z2 = 8;
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 1;
  double var_mu2 = 1.0;  // prior variance of the per-utterance mean
  double var_z1 = 1.0;   // prior variance of the segment latent
  double var_z2 = 0.25;  // conditional prior variance of the sequence latent
  double alpha = 10.0;   // discriminative weight

  void validate() const;

  static ModelConfig production_shape();
};

}  // namespace fhvae
