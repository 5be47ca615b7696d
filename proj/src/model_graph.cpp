#include "fhvae/model_graph.hpp"

#include <cmath>
#include <numbers>
#include <unordered_map>

namespace fhvae::graph {

namespace {

constexpr double kVarFloor = 1e-6;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Staged stage_impl(Tape& t, const ModelParams& p, bool requires_grad,
                  std::ptrdiff_t subst_pos, Var subst) {
  Staged s;
  std::unordered_map<const Tensor*, Var> handle;
  std::ptrdiff_t pos = 0;
  p.for_each_const([&](const std::string&, const Tensor& tensor) {
    Var v = pos == subst_pos ? subst : t.leaf(tensor, requires_grad);
    ++pos;
    s.leaves.push_back(v);
    handle[&tensor] = v;
  });
  auto get = [&handle](const Tensor& tensor) { return handle.at(&tensor); };
  auto cells = [&get](const std::vector<GruParams>& cs) {
    std::vector<GruVars> out;
    out.reserve(cs.size());
    for (const GruParams& c : cs) {
      out.push_back(GruVars{get(c.w_u), get(c.b_u), get(c.w_c), get(c.b_c)});
    }
    return out;
  };
  s.vars.enc_z2_cells = cells(p.enc_z2_cells);
  s.vars.enc_z2_mu_w = get(p.enc_z2_mu_w);
  s.vars.enc_z2_mu_b = get(p.enc_z2_mu_b);
  s.vars.enc_z2_lv_w = get(p.enc_z2_lv_w);
  s.vars.enc_z2_lv_b = get(p.enc_z2_lv_b);
  s.vars.enc_z1_cells = cells(p.enc_z1_cells);
  s.vars.enc_z1_mu_w = get(p.enc_z1_mu_w);
  s.vars.enc_z1_mu_b = get(p.enc_z1_mu_b);
  s.vars.enc_z1_lv_w = get(p.enc_z1_lv_w);
  s.vars.enc_z1_lv_b = get(p.enc_z1_lv_b);
  for (const Tensor& w : p.dec_init_w) s.vars.dec_init_w.push_back(get(w));
  for (const Tensor& b : p.dec_init_b) s.vars.dec_init_b.push_back(get(b));
  s.vars.dec_cells = cells(p.dec_cells);
  s.vars.dec_mu_w = get(p.dec_mu_w);
  s.vars.dec_mu_b = get(p.dec_mu_b);
  s.vars.dec_lv_w = get(p.dec_lv_w);
  s.vars.dec_lv_b = get(p.dec_lv_b);
  return s;
}

}  // namespace

Staged stage_params(Tape& t, const ModelParams& params, bool requires_grad) {
  return stage_impl(t, params, requires_grad, -1, Var{});
}

Staged stage_params_substituting(Tape& t, const ModelParams& params,
                                 std::size_t leaf_index, Var subst) {
  return stage_impl(t, params, false,
                    static_cast<std::ptrdiff_t>(leaf_index), subst);
}

Var affine(Tape& t, Var x, Var w, Var b) {
  const std::size_t rows = t.value(x).shape[0];
  return t.add(t.matmul(x, w), t.broadcast_rows(b, rows));
}

Var gru_step(Tape& t, const GruVars& cell, Var h, Var x) {
  Var in = t.concat_cols({h, x});
  Var u = t.sigmoid(affine(t, in, cell.w_u, cell.b_u));
  Var cand = t.tanh(affine(t, in, cell.w_c, cell.b_c));
  Var keep = t.mul(u, h);
  Var mix = t.mul(t.add_scalar(t.scale(u, -1.0), 1.0), cand);
  return t.add(keep, mix);
}

namespace {

EncoderOut run_encoder(Tape& t, Var x, Var extra, const std::vector<GruVars>& cells,
                       Var mu_w, Var mu_b, Var lv_w, Var lv_b,
                       const ModelConfig& cfg) {
  const std::size_t b = t.value(x).shape[0];
  const std::size_t f = cfg.feat_dim;
  std::vector<Var> h(cells.size());
  for (std::size_t l = 0; l < cells.size(); ++l) {
    h[l] = t.leaf(Tensor({b, cfg.hidden_dim}));
  }
  for (std::size_t ti = 0; ti < cfg.seg_len; ++ti) {
    Var frame = t.slice_cols(x, ti * f, (ti + 1) * f);
    Var input = extra.valid() ? t.concat_cols({frame, extra}) : frame;
    for (std::size_t l = 0; l < cells.size(); ++l) {
      h[l] = gru_step(t, cells[l], h[l], input);
      input = h[l];
    }
  }
  Var top = h.back();
  return EncoderOut{affine(t, top, mu_w, mu_b), affine(t, top, lv_w, lv_b)};
}

}  // namespace

EncoderOut encode_z2(Tape& t, const ParamVars& pv, Var x, const ModelConfig& cfg) {
  return run_encoder(t, x, Var{}, pv.enc_z2_cells, pv.enc_z2_mu_w, pv.enc_z2_mu_b,
                     pv.enc_z2_lv_w, pv.enc_z2_lv_b, cfg);
}

EncoderOut encode_z1(Tape& t, const ParamVars& pv, Var x, Var z2,
                     const ModelConfig& cfg) {
  return run_encoder(t, x, z2, pv.enc_z1_cells, pv.enc_z1_mu_w, pv.enc_z1_mu_b,
                     pv.enc_z1_lv_w, pv.enc_z1_lv_b, cfg);
}

DecoderOut decode(Tape& t, const ParamVars& pv, Var z1, Var z2,
                  const ModelConfig& cfg) {
  Var ctx = t.concat_cols({z1, z2});
  std::vector<Var> h(pv.dec_cells.size());
  for (std::size_t l = 0; l < h.size(); ++l) {
    h[l] = t.tanh(affine(t, ctx, pv.dec_init_w[l], pv.dec_init_b[l]));
  }
  std::vector<Var> mu_frames, lv_frames;
  mu_frames.reserve(cfg.seg_len);
  lv_frames.reserve(cfg.seg_len);
  for (std::size_t ti = 0; ti < cfg.seg_len; ++ti) {
    Var input = ctx;
    for (std::size_t l = 0; l < h.size(); ++l) {
      h[l] = gru_step(t, pv.dec_cells[l], h[l], input);
      input = h[l];
    }
    mu_frames.push_back(affine(t, h.back(), pv.dec_mu_w, pv.dec_mu_b));
    lv_frames.push_back(affine(t, h.back(), pv.dec_lv_w, pv.dec_lv_b));
  }
  return DecoderOut{t.concat_cols(mu_frames), t.concat_cols(lv_frames)};
}

Var sample_gaussian(Tape& t, const EncoderOut& post, Var eps) {
  return t.add(post.mean, t.mul(t.exp(t.scale(post.logvar, 0.5)), eps));
}

Var kl_rows(Tape& t, const EncoderOut& q, Var p_mean_rows, double var) {
  Var m = p_mean_rows.valid() ? t.sub(q.mean, p_mean_rows) : q.mean;
  Var quad = t.add(t.exp(q.logvar), t.mul(m, m));
  Var inner = t.add_scalar(t.sub(t.scale(quad, 1.0 / var), q.logvar),
                           std::log(var) - 1.0);
  return t.scale(t.reduce_sum(inner, {1}), 0.5);
}

Var gaussian_log_prob_rows(Tape& t, Var x, Var mu, Var var) {
  Var diff = t.sub(x, mu);
  Var quad = t.div(t.mul(diff, diff), var);
  Var elem = t.add_scalar(t.add(t.scale(t.log(var), -0.5), t.scale(quad, -0.5)),
                          -0.5 * kLog2Pi);
  return t.reduce_sum(elem, {1});
}

Var decoder_variance(Tape& t, Var logvar) {
  return t.add_scalar(t.exp(logvar), kVarFloor);
}

}  // namespace fhvae::graph
