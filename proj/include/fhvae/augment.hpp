#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fhvae/corpus.hpp"
#include "fhvae/model.hpp"
#include "fhvae/rng.hpp"
#include "fhvae/tensor.hpp"

namespace fhvae {

// Inferred latents of one utterance: per-segment posterior means plus the
// MAP estimate of the sequence prior mean.
struct UtteranceLatents {
  std::string utt_id;
  std::vector<Tensor> z1_means;
  std::vector<Tensor> z2_means;
  Tensor s_vector;
};

// sum(z) / (N + var_z2 / var_mu2): approximate MAP of the sequence prior
// mean given N segment posteriors.
Tensor estimate_svector_map(const std::vector<Tensor>& z2_means, double var_z2,
                            double var_mu2);

// Plain per-utterance average of latent vectors; the short-utterance-fragile
// baseline estimator.
Tensor estimate_nuisance_by_mean(const std::vector<Tensor>& z_means);

// Shifts every segment's z2 by (target - own s-vector). The z1 list is not
// touched. Shifting back to the source s-vector restores the input.
std::vector<Tensor> replace_nuisance(const UtteranceLatents& latents,
                                     const Tensor& target_svector);

// Principal directions of the s-vector population; sigma is sorted
// descending and the eigvecs rows are orthonormal.
struct PerturbationBasis {
  Tensor mean;     // (D)
  Tensor sigma;    // (D) square roots of the covariance eigenvalues
  Tensor eigvecs;  // (D, D), row d is the d-th principal direction
  std::size_t m_utterances = 0;
};

// Covariance uses the population denominator M.
PerturbationBasis pca_svectors(const std::vector<Tensor>& svectors);

enum class PerturbScheme { kProposed, kReversed, kUniform };
PerturbScheme parse_scheme(const std::string& name);  // proposed | rev-p | uni-p
std::string scheme_name(PerturbScheme scheme);

// p = gamma * sum_d psi_d c_d e_d with psi ~ N(0,1); c_d is sigma_d for the
// proposed scheme, the reversed sigma for rev-p, and the RMS of sigma for
// uni-p. All three share E||p||^2 = gamma^2 sum_d sigma_d^2.
Tensor sample_perturbation(const PerturbationBasis& basis, double gamma,
                           PerturbScheme scheme, RandomStream& rng);

// Adds the same p to every segment's z2.
std::vector<Tensor> perturb_utterance(const UtteranceLatents& latents,
                                      const Tensor& p);

// Posterior means of every full segment plus the MAP s-vector; nullopt when
// the utterance is shorter than one segment.
std::optional<UtteranceLatents> encode_utterance(const Model& model,
                                                 const FeatureMatrix& fm);

struct TransformOptions {
  enum class Mode { kReconstruct, kReplace, kPerturb };
  Mode mode = Mode::kReconstruct;
  Tensor target_svector;                   // replace
  const PerturbationBasis* basis = nullptr;  // perturb
  PerturbScheme scheme = PerturbScheme::kProposed;
  double gamma = 1.0;
  bool drop_tail = false;  // default: pass tail frames through unmodified
};

// Segments the utterance, edits the z2 latents per mode and decodes the
// predicted means back to frames. Frames past the last full segment are kept
// or dropped per options. Returns nullopt (with a warning) when the
// utterance is too short for a single segment.
std::optional<FeatureMatrix> transform_utterance(const Model& model,
                                                 const FeatureMatrix& fm,
                                                 const TransformOptions& options,
                                                 RandomStream& rng);

// s-vector dump: one line per utterance, utt_id TAB space-separated decimal
// floats; round trips at full precision.
void save_svectors(const std::vector<std::pair<std::string, Tensor>>& svectors,
                   const std::string& path);
std::vector<std::pair<std::string, Tensor>> load_svectors(const std::string& path);

// Perturbation basis in the model container format under the names
// "pca.mean", "pca.sigma", "pca.eigvecs" (+ "pca.m_utterances").
void save_basis(const PerturbationBasis& basis, const ModelConfig& config,
                const std::string& path);
PerturbationBasis load_basis(const std::string& path);

// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations;
// eigenvalues descending, eigenvectors as rows. Throws NumericError if the
// sweep fails to converge.
void symmetric_eigen(const Tensor& matrix, Tensor& eigenvalues,
                     Tensor& eigenvectors_rows);

}  // namespace fhvae
