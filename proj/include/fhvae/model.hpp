#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fhvae/model_config.hpp"
#include "fhvae/rng.hpp"
#include "fhvae/tape.hpp"
#include "fhvae/tensor.hpp"

namespace fhvae {

// Diagonal Gaussian over a latent vector.
struct GaussianPosterior {
  Tensor mean;
  Tensor logvar;
};

// Per-utterance posterior means of the sequence variable's prior mean.
// Entries are trainable during optimization; insertion order is preserved so
// parameter staging is deterministic.
class SVectorTable {
 public:
  void insert(const std::string& utt_id, Tensor vec);
  bool contains(const std::string& utt_id) const;
  const Tensor& at(const std::string& utt_id) const;
  std::size_t row_of(const std::string& utt_id) const;  // throws if absent

  std::size_t size() const { return vecs_.size(); }
  bool empty() const { return vecs_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const Tensor& row(std::size_t i) const { return vecs_[i]; }
  Tensor& row(std::size_t i) { return vecs_[i]; }
  void clear();

 private:
  std::vector<std::string> ids_;
  std::vector<Tensor> vecs_;
  std::unordered_map<std::string, std::size_t> index_;
};

// One gated recurrent cell: update gate and candidate, each an affine of
// [state, input].
struct GruParams {
  Tensor w_u, b_u, w_c, b_c;
};

struct ModelParams {
  std::vector<GruParams> enc_z2_cells;
  Tensor enc_z2_mu_w, enc_z2_mu_b, enc_z2_lv_w, enc_z2_lv_b;
  std::vector<GruParams> enc_z1_cells;
  Tensor enc_z1_mu_w, enc_z1_mu_b, enc_z1_lv_w, enc_z1_lv_b;
  std::vector<Tensor> dec_init_w, dec_init_b;  // per-layer state init from [z1;z2]
  std::vector<GruParams> dec_cells;
  Tensor dec_mu_w, dec_mu_b, dec_lv_w, dec_lv_b;

  static ModelParams init(const ModelConfig& config, RandomStream& rng);

  // Canonical enumeration used for staging, gradients, optimizer slots and
  // checkpoints. f(name, Tensor&).
  template <typename F>
  void for_each(F&& f);
  template <typename F>
  void for_each_const(F&& f) const;

  std::size_t count() const;
  bool all_finite() const;
};

struct Model {
  ModelConfig config;
  ModelParams params;
};

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

// log N(x | mean, diag(var)), summed over coordinates.
double gaussian_log_prob(const Tensor& x, const Tensor& mean, const Tensor& var);

// KL(q || N(p_mean, diag(p_var))) for a diagonal Gaussian posterior.
double kl_diag_gaussian(const GaussianPosterior& q, const Tensor& p_mean,
                        const Tensor& p_var);

// Posterior and one reparameterized sample for a single segment (seg_len x
// feat_dim). Deterministic given the stream state.
std::pair<GaussianPosterior, Tensor> encode_z2(const Model& model,
                                               const Tensor& segment,
                                               RandomStream& rng);
std::pair<GaussianPosterior, Tensor> encode_z1(const Model& model,
                                               const Tensor& segment,
                                               const Tensor& z2_sample,
                                               RandomStream& rng);

// Per-frame mean and variance of p(x | z1, z2); both seg_len x feat_dim.
std::pair<Tensor, Tensor> decode(const Model& model, const Tensor& z1,
                                 const Tensor& z2);

// Posterior means for a batch of flattened segments (B x seg_len*feat_dim),
// without sampling; the z1 encoder is conditioned on the z2 posterior mean.
struct BatchPosteriors {
  Tensor z1_mean;  // (B, dim_z1)
  Tensor z2_mean;  // (B, dim_z2)
};
BatchPosteriors encode_batch_means(const Model& model, const Tensor& seg_rows);

// Per-segment means over a batch. total is the training objective
// -(lower bound + alpha * disc); the remaining fields are its pieces.
struct LossParts {
  double total = 0.0;
  double lower_bound = 0.0;
  double recon = 0.0;   // E_q[log p(x | z1, z2)]
  double kl_z1 = 0.0;
  double kl_z2 = 0.0;
  double prior = 0.0;   // (1/N) log p(s-vector), averaged
  double disc = 0.0;    // log-probability of picking the right utterance
};

struct SegmentBatch {
  Tensor x;                          // (B, seg_len*feat_dim)
  std::vector<std::string> utt_ids;  // per segment
  std::vector<double> inv_n_utt;     // 1 / segment count of the utterance

  std::size_t size() const { return utt_ids.size(); }
};

// Variational lower bound of one segment, with the utterance's table entry
// as the conditional prior mean.
double segment_lower_bound(const Model& model, const Tensor& segment,
                           const std::string& utt_id, const SVectorTable& table,
                           RandomStream& rng, std::size_t n_utt);
LossParts segment_lower_bound_parts(const Model& model, const Tensor& segment,
                                    const std::string& utt_id,
                                    const SVectorTable& table, RandomStream& rng,
                                    std::size_t n_utt);

// log [ N(z | table[utt], var_z2 I) / sum_j N(z | table[j], var_z2 I) ].
double discriminative_loss(const Tensor& z2_posterior_mean,
                           const std::string& utt_id, const SVectorTable& table,
                           const ModelConfig& config);

double total_loss(const Model& model, const SegmentBatch& batch,
                  const SVectorTable& table, RandomStream& rng);
LossParts total_loss_parts(const Model& model, const SegmentBatch& batch,
                           const SVectorTable& table, RandomStream& rng);

// Loss plus gradients for every model parameter (in for_each order) and every
// table entry (in table order).
struct LossGradients {
  LossParts parts;
  std::vector<Tensor> param_grads;
  std::vector<Tensor> table_grads;
};
LossGradients total_loss_gradients(const Model& model, const SegmentBatch& batch,
                                   const SVectorTable& table, RandomStream& rng);

// Lower bound only (no discriminative term), used for validation scoring
// where the table entry is a fixed estimate rather than a parameter.
LossParts lower_bound_parts(const Model& model, const SegmentBatch& batch,
                            const std::vector<Tensor>& svectors,
                            const std::vector<std::size_t>& svector_row,
                            RandomStream& rng);

// Central finite differences of total_loss against the tape gradient, over
// every model parameter and table entry. The sampling noise is replayed from
// rng_seed on every evaluation.
struct FdReport {
  double max_rel_err = 0.0;
  std::string worst;
};
FdReport finite_diff_check_total_loss(const Model& model, const SegmentBatch& batch,
                                      const SVectorTable& table,
                                      std::uint64_t rng_seed, double h);

// --- template bodies -------------------------------------------------------

template <typename F>
void ModelParams::for_each(F&& f) {
  auto cells = [&f](std::vector<GruParams>& cs, const std::string& prefix) {
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const std::string p = prefix + std::to_string(i);
      f(p + ".w_u", cs[i].w_u);
      f(p + ".b_u", cs[i].b_u);
      f(p + ".w_c", cs[i].w_c);
      f(p + ".b_c", cs[i].b_c);
    }
  };
  cells(enc_z2_cells, "enc_z2.gru");
  f("enc_z2.mu_w", enc_z2_mu_w);
  f("enc_z2.mu_b", enc_z2_mu_b);
  f("enc_z2.lv_w", enc_z2_lv_w);
  f("enc_z2.lv_b", enc_z2_lv_b);
  cells(enc_z1_cells, "enc_z1.gru");
  f("enc_z1.mu_w", enc_z1_mu_w);
  f("enc_z1.mu_b", enc_z1_mu_b);
  f("enc_z1.lv_w", enc_z1_lv_w);
  f("enc_z1.lv_b", enc_z1_lv_b);
  for (std::size_t i = 0; i < dec_init_w.size(); ++i) {
    f("dec.init" + std::to_string(i) + ".w", dec_init_w[i]);
    f("dec.init" + std::to_string(i) + ".b", dec_init_b[i]);
  }
  cells(dec_cells, "dec.gru");
  f("dec.mu_w", dec_mu_w);
  f("dec.mu_b", dec_mu_b);
  f("dec.lv_w", dec_lv_w);
  f("dec.lv_b", dec_lv_b);
}

template <typename F>
void ModelParams::for_each_const(F&& f) const {
  const_cast<ModelParams*>(this)->for_each(
      [&f](const std::string& name, Tensor& t) { f(name, const_cast<const Tensor&>(t)); });
}

}  // namespace fhvae
