#include "fhvae/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "fhvae/checkpoint.hpp"
#include "fhvae/model_graph.hpp"

namespace fhvae {

namespace {

constexpr double kVarFloor = 1e-6;  // decoder variance floor
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

// --- SVectorTable ------------------------------------------------------------

void SVectorTable::insert(const std::string& utt_id, Tensor vec) {
  if (index_.count(utt_id)) {
    throw ContractError("s-vector table: duplicate utterance '" + utt_id + "'");
  }
  index_[utt_id] = vecs_.size();
  ids_.push_back(utt_id);
  vecs_.push_back(std::move(vec));
}

bool SVectorTable::contains(const std::string& utt_id) const {
  return index_.count(utt_id) != 0;
}

const Tensor& SVectorTable::at(const std::string& utt_id) const {
  return vecs_[row_of(utt_id)];
}

std::size_t SVectorTable::row_of(const std::string& utt_id) const {
  auto it = index_.find(utt_id);
  if (it == index_.end()) {
    throw ContractError("s-vector table: utterance '" + utt_id + "' not present");
  }
  return it->second;
}

void SVectorTable::clear() {
  ids_.clear();
  vecs_.clear();
  index_.clear();
}

// --- parameters --------------------------------------------------------------

namespace {

GruParams init_cell(std::size_t input_dim, std::size_t hidden, RandomStream& rng) {
  const std::size_t fan_in = hidden + input_dim;
  const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
  GruParams c;
  c.w_u = rng.uniform_tensor({fan_in, hidden}, -s, s);
  c.b_u = Tensor({hidden});
  c.w_c = rng.uniform_tensor({fan_in, hidden}, -s, s);
  c.b_c = Tensor({hidden});
  return c;
}

Tensor init_weight(std::size_t in, std::size_t out, RandomStream& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  return rng.uniform_tensor({in, out}, -s, s);
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, RandomStream& rng) {
  config.validate();
  const std::size_t h = config.hidden_dim;
  const std::size_t ctx = config.dim_z1 + config.dim_z2;
  ModelParams p;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    p.enc_z2_cells.push_back(init_cell(l == 0 ? config.feat_dim : h, h, rng));
  }
  p.enc_z2_mu_w = init_weight(h, config.dim_z2, rng);
  p.enc_z2_mu_b = Tensor({config.dim_z2});
  p.enc_z2_lv_w = init_weight(h, config.dim_z2, rng);
  p.enc_z2_lv_b = Tensor({config.dim_z2});
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    p.enc_z1_cells.push_back(
        init_cell(l == 0 ? config.feat_dim + config.dim_z2 : h, h, rng));
  }
  p.enc_z1_mu_w = init_weight(h, config.dim_z1, rng);
  p.enc_z1_mu_b = Tensor({config.dim_z1});
  p.enc_z1_lv_w = init_weight(h, config.dim_z1, rng);
  p.enc_z1_lv_b = Tensor({config.dim_z1});
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    p.dec_init_w.push_back(init_weight(ctx, h, rng));
    p.dec_init_b.push_back(Tensor({h}));
    p.dec_cells.push_back(init_cell(l == 0 ? ctx : h, h, rng));
  }
  p.dec_mu_w = init_weight(h, config.feat_dim, rng);
  p.dec_mu_b = Tensor({config.feat_dim});
  p.dec_lv_w = init_weight(h, config.feat_dim, rng);
  p.dec_lv_b = Tensor({config.feat_dim});
  return p;
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for_each_const([&n](const std::string&, const Tensor&) { ++n; });
  return n;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each_const([&ok](const std::string&, const Tensor& t) {
    if (!t.all_finite()) ok = false;
  });
  return ok;
}

void save_model(const Model& model, const std::string& path) {
  std::vector<NamedTensor> tensors;
  model.params.for_each_const([&tensors](const std::string& name, const Tensor& t) {
    tensors.push_back(NamedTensor{name, t});
  });
  write_container(path, model.config, tensors);
}

Model load_model(const std::string& path) {
  Container c = read_container(path);
  Model model;
  model.config = c.config;
  RandomStream scratch(0);
  model.params = ModelParams::init(c.config, scratch);
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const NamedTensor& nt : c.tensors) by_name[nt.name] = &nt.tensor;
  std::size_t filled = 0;
  model.params.for_each([&](const std::string& name, Tensor& t) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw IoError("model load: tensor '" + name + "' missing from " + path);
    }
    if (it->second->shape != t.shape) {
      throw IoError("model load: tensor '" + name + "' has shape " +
                    shape_to_string(it->second->shape) + ", expected " +
                    shape_to_string(t.shape));
    }
    t = *it->second;
    ++filled;
  });
  if (filled != c.tensors.size()) {
    throw IoError("model load: " + path + " carries unexpected tensors");
  }
  return model;
}

// --- plain densities -----------------------------------------------------------

double gaussian_log_prob(const Tensor& x, const Tensor& mean, const Tensor& var) {
  if (x.numel() != mean.numel() || x.numel() != var.numel()) {
    throw ShapeError("gaussian_log_prob: lengths " + std::to_string(x.numel()) +
                     ", " + std::to_string(mean.numel()) + ", " +
                     std::to_string(var.numel()) + " differ");
  }
  double lp = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (!(var[i] > 0.0)) {
      throw NumericError("gaussian_log_prob: non-positive variance " +
                         std::to_string(var[i]));
    }
    const double d = x[i] - mean[i];
    lp += -0.5 * (kLog2Pi + std::log(var[i])) - d * d / (2.0 * var[i]);
  }
  return lp;
}

double kl_diag_gaussian(const GaussianPosterior& q, const Tensor& p_mean,
                        const Tensor& p_var) {
  const std::size_t n = q.mean.numel();
  if (q.logvar.numel() != n || p_mean.numel() != n || p_var.numel() != n) {
    throw ContractError("kl_diag_gaussian: dimension mismatch");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(p_var[i] > 0.0)) {
      throw NumericError("kl_diag_gaussian: non-positive prior variance");
    }
    const double d = q.mean[i] - p_mean[i];
    kl += 0.5 * ((std::exp(q.logvar[i]) + d * d) / p_var[i] - 1.0 +
                 std::log(p_var[i]) - q.logvar[i]);
  }
  return kl;
}

double discriminative_loss(const Tensor& z2_posterior_mean,
                           const std::string& utt_id, const SVectorTable& table,
                           const ModelConfig& config) {
  if (table.empty()) throw ContractError("discriminative_loss: empty table");
  const std::size_t own = table.row_of(utt_id);
  const std::size_t d = z2_posterior_mean.numel();
  // The shared Gaussian normalizer cancels in the ratio; only the quadratic
  // term survives.
  std::vector<double> logits(table.size());
  for (std::size_t j = 0; j < table.size(); ++j) {
    const Tensor& mu = table.row(j);
    if (mu.numel() != d) {
      throw ContractError("discriminative_loss: table entry dimension mismatch");
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = z2_posterior_mean[i] - mu[i];
      sq += diff * diff;
    }
    logits[j] = -sq / (2.0 * config.var_z2);
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - m);
  return logits[own] - (m + std::log(sum));
}

// --- loss graph ------------------------------------------------------------------

namespace {

struct LossGraph {
  Var total, lower_bound, recon, klz1, klz2, prior, disc;
};

void check_batch(const SegmentBatch& batch, const ModelConfig& cfg) {
  if (batch.size() == 0) throw ContractError("loss: empty segment batch");
  const Shape expect{batch.size(), cfg.seg_len * cfg.feat_dim};
  if (batch.x.shape != expect) {
    throw ShapeError("loss: batch " + shape_to_string(batch.x.shape) +
                     " does not match " + shape_to_string(expect));
  }
  if (batch.inv_n_utt.size() != batch.size()) {
    throw ContractError("loss: inv_n_utt size mismatch");
  }
  for (double w : batch.inv_n_utt) {
    if (!(w > 0.0) || !(w <= 1.0)) {
      throw ContractError("loss: 1/N weights must lie in (0, 1]");
    }
  }
}

LossGraph build_loss_graph(Tape& t, const graph::ParamVars& pv,
                           const std::vector<Var>& table_vars,
                           const std::vector<std::size_t>& table_row,
                           const SegmentBatch& batch, const ModelConfig& cfg,
                           RandomStream& rng, bool with_disc, double alpha) {
  const std::size_t b = batch.size();
  Var x = t.leaf(batch.x);

  graph::EncoderOut q2 = graph::encode_z2(t, pv, x, cfg);
  Var eps2 = t.leaf(rng.normal_tensor({b, cfg.dim_z2}));
  Var z2 = graph::sample_gaussian(t, q2, eps2);

  graph::EncoderOut q1 = graph::encode_z1(t, pv, x, z2, cfg);
  Var eps1 = t.leaf(rng.normal_tensor({b, cfg.dim_z1}));
  Var z1 = graph::sample_gaussian(t, q1, eps1);

  graph::DecoderOut dec = graph::decode(t, pv, z1, z2, cfg);
  Var var_x = graph::decoder_variance(t, dec.logvar);
  Var recon_row = graph::gaussian_log_prob_rows(t, x, dec.mu, var_x);

  Var klz1_row = graph::kl_rows(t, q1, Var{}, cfg.var_z1);

  std::vector<Var> mu_rows(b);
  for (std::size_t i = 0; i < b; ++i) mu_rows[i] = table_vars[table_row[i]];
  Var mu_tilde = t.stack_rows(mu_rows);
  Var klz2_row = graph::kl_rows(t, q2, mu_tilde, cfg.var_z2);

  const double dz2 = static_cast<double>(cfg.dim_z2);
  Var mu_sq = t.reduce_sum(t.mul(mu_tilde, mu_tilde), {1});
  Var log_prior = t.add_scalar(t.scale(mu_sq, -0.5 / cfg.var_mu2),
                               -0.5 * dz2 * (kLog2Pi + std::log(cfg.var_mu2)));
  Var inv_n = t.leaf(Tensor({b}, batch.inv_n_utt));
  Var prior_row = t.mul(log_prior, inv_n);

  Var lb_row = t.add(t.sub(recon_row, t.add(klz1_row, klz2_row)), prior_row);

  LossGraph g;
  g.recon = t.reduce_mean(recon_row, {0});
  g.klz1 = t.reduce_mean(klz1_row, {0});
  g.klz2 = t.reduce_mean(klz2_row, {0});
  g.prior = t.reduce_mean(prior_row, {0});
  g.lower_bound = t.reduce_mean(lb_row, {0});

  if (with_disc) {
    const std::size_t j = table_vars.size();
    Var table_mat = t.stack_rows(table_vars);
    Var disc_sum;
    for (std::size_t i = 0; i < b; ++i) {
      Var zbar = t.reshape(t.slice_rows(q2.mean, i, i + 1), {cfg.dim_z2});
      Var diffs = t.sub(table_mat, t.broadcast_rows(zbar, j));
      Var sq = t.reduce_sum(t.mul(diffs, diffs), {1});
      Var logits = t.scale(sq, -0.5 / cfg.var_z2);
      Var own = t.reshape(t.slice_cols(logits, table_row[i], table_row[i] + 1), {});
      const auto& lv = t.value(logits).data;
      const double shift = *std::max_element(lv.begin(), lv.end());
      Var lse = t.add_scalar(t.log(t.sum_all(t.exp(t.add_scalar(logits, -shift)))),
                             shift);
      Var di = t.sub(own, lse);
      disc_sum = disc_sum.valid() ? t.add(disc_sum, di) : di;
    }
    g.disc = t.scale(disc_sum, 1.0 / static_cast<double>(b));
  } else {
    g.disc = t.leaf(Tensor::scalar(0.0));
  }
  g.total = t.scale(t.add(g.lower_bound, t.scale(g.disc, alpha)), -1.0);
  return g;
}

LossParts read_parts(const Tape& t, const LossGraph& g) {
  LossParts p;
  p.total = t.scalar_value(g.total);
  p.lower_bound = t.scalar_value(g.lower_bound);
  p.recon = t.scalar_value(g.recon);
  p.kl_z1 = t.scalar_value(g.klz1);
  p.kl_z2 = t.scalar_value(g.klz2);
  p.prior = t.scalar_value(g.prior);
  p.disc = t.scalar_value(g.disc);
  return p;
}

std::vector<std::size_t> resolve_rows(const SegmentBatch& batch,
                                      const SVectorTable& table) {
  std::vector<std::size_t> rows;
  rows.reserve(batch.size());
  for (const std::string& id : batch.utt_ids) rows.push_back(table.row_of(id));
  return rows;
}

std::vector<Var> stage_table(Tape& t, const SVectorTable& table, bool requires_grad) {
  std::vector<Var> vars;
  vars.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    vars.push_back(t.leaf(table.row(i), requires_grad));
  }
  return vars;
}

Tensor flatten_segment(const Tensor& segment, const ModelConfig& cfg,
                       const char* op) {
  if (segment.shape != Shape{cfg.seg_len, cfg.feat_dim}) {
    throw ContractError(std::string(op) + ": segment " +
                        shape_to_string(segment.shape) + " does not match (" +
                        std::to_string(cfg.seg_len) + "," +
                        std::to_string(cfg.feat_dim) + ")");
  }
  return Tensor({1, segment.numel()}, segment.data);
}

GaussianPosterior posterior_from_row(const Tape& t, const graph::EncoderOut& out) {
  const Tensor& m = t.value(out.mean);
  const Tensor& lv = t.value(out.logvar);
  GaussianPosterior p;
  p.mean = Tensor({m.shape[1]}, m.data);
  p.logvar = Tensor({lv.shape[1]}, lv.data);
  return p;
}

}  // namespace

// --- public single-segment ops ---------------------------------------------------

std::pair<GaussianPosterior, Tensor> encode_z2(const Model& model,
                                               const Tensor& segment,
                                               RandomStream& rng) {
  Tape t;
  graph::Staged sp = graph::stage_params(t, model.params, false);
  Var x = t.leaf(flatten_segment(segment, model.config, "encode_z2"));
  graph::EncoderOut q = graph::encode_z2(t, sp.vars, x, model.config);
  Var eps = t.leaf(rng.normal_tensor({1, model.config.dim_z2}));
  Var z = graph::sample_gaussian(t, q, eps);
  GaussianPosterior post = posterior_from_row(t, q);
  const Tensor& zv = t.value(z);
  return {std::move(post), Tensor({zv.shape[1]}, zv.data)};
}

std::pair<GaussianPosterior, Tensor> encode_z1(const Model& model,
                                               const Tensor& segment,
                                               const Tensor& z2_sample,
                                               RandomStream& rng) {
  if (z2_sample.numel() != model.config.dim_z2) {
    throw ContractError("encode_z1: conditioning vector has length " +
                        std::to_string(z2_sample.numel()) + ", expected " +
                        std::to_string(model.config.dim_z2));
  }
  Tape t;
  graph::Staged sp = graph::stage_params(t, model.params, false);
  Var x = t.leaf(flatten_segment(segment, model.config, "encode_z1"));
  Var z2 = t.leaf(Tensor({1, z2_sample.numel()}, z2_sample.data));
  graph::EncoderOut q = graph::encode_z1(t, sp.vars, x, z2, model.config);
  Var eps = t.leaf(rng.normal_tensor({1, model.config.dim_z1}));
  Var z = graph::sample_gaussian(t, q, eps);
  GaussianPosterior post = posterior_from_row(t, q);
  const Tensor& zv = t.value(z);
  return {std::move(post), Tensor({zv.shape[1]}, zv.data)};
}

std::pair<Tensor, Tensor> decode(const Model& model, const Tensor& z1,
                                 const Tensor& z2) {
  const ModelConfig& cfg = model.config;
  if (z1.numel() != cfg.dim_z1 || z2.numel() != cfg.dim_z2) {
    throw ContractError("decode: latent dims (" + std::to_string(z1.numel()) + "," +
                        std::to_string(z2.numel()) + ") do not match config (" +
                        std::to_string(cfg.dim_z1) + "," +
                        std::to_string(cfg.dim_z2) + ")");
  }
  Tape t;
  graph::Staged sp = graph::stage_params(t, model.params, false);
  Var z1v = t.leaf(Tensor({1, z1.numel()}, z1.data));
  Var z2v = t.leaf(Tensor({1, z2.numel()}, z2.data));
  graph::DecoderOut out = graph::decode(t, sp.vars, z1v, z2v, cfg);
  const Tensor& mu_flat = t.value(out.mu);
  const Tensor& lv_flat = t.value(out.logvar);
  Tensor mu({cfg.seg_len, cfg.feat_dim}, mu_flat.data);
  Tensor var({cfg.seg_len, cfg.feat_dim});
  for (std::size_t i = 0; i < var.numel(); ++i) {
    var.data[i] = std::exp(lv_flat.data[i]) + kVarFloor;
  }
  for (std::size_t ti = 0; ti < cfg.seg_len; ++ti) {
    for (std::size_t j = 0; j < cfg.feat_dim; ++j) {
      if (!std::isfinite(mu.at2(ti, j)) || !std::isfinite(var.at2(ti, j))) {
        throw NumericError("decode: non-finite output at frame " + std::to_string(ti));
      }
    }
  }
  return {std::move(mu), std::move(var)};
}

BatchPosteriors encode_batch_means(const Model& model, const Tensor& seg_rows) {
  const ModelConfig& cfg = model.config;
  if (seg_rows.rank() != 2 || seg_rows.shape[1] != cfg.seg_len * cfg.feat_dim) {
    throw ShapeError("encode_batch_means: rows " + shape_to_string(seg_rows.shape) +
                     " do not hold " + std::to_string(cfg.seg_len * cfg.feat_dim) +
                     "-dim segments");
  }
  Tape t;
  graph::Staged sp = graph::stage_params(t, model.params, false);
  Var x = t.leaf(seg_rows);
  graph::EncoderOut q2 = graph::encode_z2(t, sp.vars, x, cfg);
  graph::EncoderOut q1 = graph::encode_z1(t, sp.vars, x, q2.mean, cfg);
  return BatchPosteriors{t.value(q1.mean), t.value(q2.mean)};
}

// --- losses ----------------------------------------------------------------------

LossParts segment_lower_bound_parts(const Model& model, const Tensor& segment,
                                    const std::string& utt_id,
                                    const SVectorTable& table, RandomStream& rng,
                                    std::size_t n_utt) {
  if (n_utt < 1) throw ContractError("segment_lower_bound: n_utt must be >= 1");
  SegmentBatch batch;
  batch.x = flatten_segment(segment, model.config, "segment_lower_bound");
  batch.utt_ids = {utt_id};
  batch.inv_n_utt = {1.0 / static_cast<double>(n_utt)};

  Tape t;
  graph::Staged sp = graph::stage_params(t, model.params, false);
  std::vector<Var> table_vars = stage_table(t, table, false);
  std::vector<std::size_t> rows = resolve_rows(batch, table);
  LossGraph g = build_loss_graph(t, sp.vars, table_vars, rows, batch, model.config,
                                 rng, false, 0.0);
  return read_parts(t, g);
}

double segment_lower_bound(const Model& model, const Tensor& segment,
                           const std::string& utt_id, const SVectorTable& table,
                           RandomStream& rng, std::size_t n_utt) {
  return segment_lower_bound_parts(model, segment, utt_id, table, rng, n_utt)
      .lower_bound;
}

LossParts total_loss_parts(const Model& model, const SegmentBatch& batch,
                           const SVectorTable& table, RandomStream& rng) {
  check_batch(batch, model.config);
  if (table.empty()) throw ContractError("total_loss: empty s-vector table");
  Tape t;
  graph::Staged sp = graph::stage_params(t, model.params, false);
  std::vector<Var> table_vars = stage_table(t, table, false);
  std::vector<std::size_t> rows = resolve_rows(batch, table);
  LossGraph g = build_loss_graph(t, sp.vars, table_vars, rows, batch, model.config,
                                 rng, true, model.config.alpha);
  return read_parts(t, g);
}

double total_loss(const Model& model, const SegmentBatch& batch,
                  const SVectorTable& table, RandomStream& rng) {
  return total_loss_parts(model, batch, table, rng).total;
}

LossGradients total_loss_gradients(const Model& model, const SegmentBatch& batch,
                                   const SVectorTable& table, RandomStream& rng) {
  check_batch(batch, model.config);
  if (table.empty()) throw ContractError("total_loss: empty s-vector table");
  Tape t;
  graph::Staged sp = graph::stage_params(t, model.params, true);
  std::vector<Var> table_vars = stage_table(t, table, true);
  std::vector<std::size_t> rows = resolve_rows(batch, table);
  LossGraph g = build_loss_graph(t, sp.vars, table_vars, rows, batch, model.config,
                                 rng, true, model.config.alpha);
  t.backward(g.total);
  LossGradients out;
  out.parts = read_parts(t, g);
  out.param_grads.reserve(sp.leaves.size());
  for (Var v : sp.leaves) out.param_grads.push_back(t.grad(v));
  out.table_grads.reserve(table_vars.size());
  for (Var v : table_vars) out.table_grads.push_back(t.grad(v));
  return out;
}

LossParts lower_bound_parts(const Model& model, const SegmentBatch& batch,
                            const std::vector<Tensor>& svectors,
                            const std::vector<std::size_t>& svector_row,
                            RandomStream& rng) {
  check_batch(batch, model.config);
  if (svector_row.size() != batch.size()) {
    throw ContractError("lower_bound_parts: row index size mismatch");
  }
  Tape t;
  graph::Staged sp = graph::stage_params(t, model.params, false);
  std::vector<Var> sv;
  sv.reserve(svectors.size());
  for (const Tensor& v : svectors) sv.push_back(t.leaf(v));
  LossGraph g = build_loss_graph(t, sp.vars, sv, svector_row, batch, model.config,
                                 rng, false, 0.0);
  return read_parts(t, g);
}

FdReport finite_diff_check_total_loss(const Model& model, const SegmentBatch& batch,
                                      const SVectorTable& table,
                                      std::uint64_t rng_seed, double h) {
  check_batch(batch, model.config);
  std::vector<std::size_t> rows = resolve_rows(batch, table);

  std::vector<std::string> names;
  std::vector<const Tensor*> tensors;
  model.params.for_each_const([&](const std::string& name, const Tensor& t) {
    names.push_back(name);
    tensors.push_back(&t);
  });

  FdReport report;
  auto consider = [&report](double err, const std::string& name) {
    if (err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst = name;
    }
  };

  for (std::size_t i = 0; i < tensors.size(); ++i) {
    ScalarGraphFn f = [&model, &batch, &table, &rows, rng_seed, i](Tape& t, Var x) {
      graph::Staged sp = graph::stage_params_substituting(t, model.params, i, x);
      std::vector<Var> table_vars = stage_table(t, table, false);
      RandomStream rng(rng_seed);
      LossGraph g = build_loss_graph(t, sp.vars, table_vars, rows, batch,
                                     model.config, rng, true, model.config.alpha);
      return g.total;
    };
    consider(finite_diff_check(f, *tensors[i], h), names[i]);
  }

  for (std::size_t j = 0; j < table.size(); ++j) {
    ScalarGraphFn f = [&model, &batch, &table, &rows, rng_seed, j](Tape& t, Var x) {
      graph::Staged sp = graph::stage_params(t, model.params, false);
      std::vector<Var> table_vars;
      for (std::size_t k = 0; k < table.size(); ++k) {
        table_vars.push_back(k == j ? x : t.leaf(table.row(k)));
      }
      RandomStream rng(rng_seed);
      LossGraph g = build_loss_graph(t, sp.vars, table_vars, rows, batch,
                                     model.config, rng, true, model.config.alpha);
      return g.total;
    };
    consider(finite_diff_check(f, table.row(j), h), "svec/" + table.ids()[j]);
  }
  return report;
}

}  // namespace fhvae
