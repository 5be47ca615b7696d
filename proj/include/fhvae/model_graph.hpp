#pragma once

#include <vector>

#include "fhvae/model.hpp"
#include "fhvae/tape.hpp"

// Tape-level builders for the encoder, decoder and density terms. The model
// module and the trainer assemble their objectives from these; they are also
// the hook for gradient checks against custom scalars.

namespace fhvae::graph {

struct GruVars {
  Var w_u, b_u, w_c, b_c;
};

struct ParamVars {
  std::vector<GruVars> enc_z2_cells, enc_z1_cells, dec_cells;
  Var enc_z2_mu_w, enc_z2_mu_b, enc_z2_lv_w, enc_z2_lv_b;
  Var enc_z1_mu_w, enc_z1_mu_b, enc_z1_lv_w, enc_z1_lv_b;
  std::vector<Var> dec_init_w, dec_init_b;
  Var dec_mu_w, dec_mu_b, dec_lv_w, dec_lv_b;
};

struct Staged {
  ParamVars vars;
  std::vector<Var> leaves;  // in ModelParams::for_each order
};

Staged stage_params(Tape& t, const ModelParams& params, bool requires_grad);

// Same staging, but the parameter at `leaf_index` (for_each order) is the
// provided node instead of a fresh leaf; used for finite-difference probes.
Staged stage_params_substituting(Tape& t, const ModelParams& params,
                                 std::size_t leaf_index, Var subst);

Var affine(Tape& t, Var x, Var w, Var b);
Var gru_step(Tape& t, const GruVars& cell, Var h, Var x);

struct EncoderOut {
  Var mean, logvar;
};

// x holds flattened segments as rows (B, seg_len*feat_dim).
EncoderOut encode_z2(Tape& t, const ParamVars& pv, Var x, const ModelConfig& cfg);
EncoderOut encode_z1(Tape& t, const ParamVars& pv, Var x, Var z2,
                     const ModelConfig& cfg);

struct DecoderOut {
  Var mu, logvar;  // (B, seg_len*feat_dim)
};
DecoderOut decode(Tape& t, const ParamVars& pv, Var z1, Var z2,
                  const ModelConfig& cfg);

Var sample_gaussian(Tape& t, const EncoderOut& post, Var eps);

// Per-row KL(q || N(p_mean_rows, var I)); pass an invalid Var for a zero
// prior mean.
Var kl_rows(Tape& t, const EncoderOut& q, Var p_mean_rows, double var);

// Per-row log N(x | mu, var), summed over columns.
Var gaussian_log_prob_rows(Tape& t, Var x, Var mu, Var var);

// exp(logvar) + floor, the decoder's output variance.
Var decoder_variance(Tape& t, Var logvar);

}  // namespace fhvae::graph
