#include "fhvae/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fhvae/augment.hpp"
#include "fhvae/log.hpp"

namespace fhvae {

void TrainConfig::validate() const {
  if (utterance_batch < 1 || segment_batch < 1) {
    throw ContractError("train config: batch sizes must be >= 1");
  }
  if (!(learning_rate > 0.0)) {
    throw ContractError("train config: learning rate must be positive");
  }
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ContractError("train config: beta1 and beta2 must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) {
    throw ContractError("train config: epsilon must be positive");
  }
  if (patience < 1) {
    throw ContractError("train config: patience must be >= 1");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ContractError("train config: val_fraction must lie in (0, 1)");
  }
}

void OptimizerState::drop_prefix(const std::string& prefix) {
  for (auto it = slots.begin(); it != slots.end();) {
    if (it->first.rfind(prefix, 0) == 0) {
      it = slots.erase(it);
    } else {
      ++it;
    }
  }
}

void adam_step(std::vector<ParamRef>& params, OptimizerState& state,
               double learning_rate, const TrainConfig& config) {
  for (const ParamRef& p : params) {
    if (!p.value || !p.grad) throw ContractError("adam_step: null parameter ref");
    if (p.grad->shape != p.value->shape) {
      throw ContractError("adam_step: gradient shape mismatch for '" + p.name + "'");
    }
    if (!p.grad->all_finite()) {
      throw NumericError("adam_step: non-finite gradient for parameter '" +
                         p.name + "'");
    }
  }
  for (ParamRef& p : params) {
    AdamSlot& slot = state.slots[p.name];
    if (slot.step == 0) {
      slot.m = Tensor(p.value->shape);
      slot.v = Tensor(p.value->shape);
    }
    ++slot.step;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(slot.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(slot.step));
    for (std::size_t i = 0; i < p.value->numel(); ++i) {
      const double g = (*p.grad)[i];
      slot.m[i] = config.beta1 * slot.m[i] + (1.0 - config.beta1) * g;
      slot.v[i] = config.beta2 * slot.v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = slot.m[i] / bc1;
      const double v_hat = slot.v[i] / bc2;
      (*p.value)[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

double clip_gradients(std::vector<Tensor*>& grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor* g : grads) {
    for (double v : g->data) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Tensor* g : grads) {
      for (double& v : g->data) v *= scale;
    }
  }
  return norm;
}

bool LrController::on_validation(double val_loss) {
  if (!enabled_) return false;
  if (val_loss < best_) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return false;
  }
  ++bad_epochs_;
  if (bad_epochs_ >= patience_) {
    lr_ *= 0.5;
    bad_epochs_ = 0;
    return true;
  }
  return false;
}

std::size_t TrainingCorpus::total_segments() const {
  std::size_t n = 0;
  for (const SegmentedUtterance& u : utts) n += u.n_segments();
  return n;
}

TrainingCorpus segment_corpus(const Corpus& corpus, const ModelConfig& config) {
  TrainingCorpus out;
  for (const FeatureMatrix& fm : corpus.utterances) {
    if (fm.num_frames() < config.seg_len) {
      log::warn("segment_corpus: utterance '" + fm.utt_id + "' has " +
                std::to_string(fm.num_frames()) +
                " frames, shorter than one segment; excluded");
      ++out.skipped_short;
      continue;
    }
    if (fm.feat_dim() != config.feat_dim) {
      throw ContractError("segment_corpus: utterance '" + fm.utt_id + "' has " +
                          std::to_string(fm.feat_dim()) + "-dim frames, expected " +
                          std::to_string(config.feat_dim));
    }
    SegmentedUtterance su;
    su.utt_id = fm.utt_id;
    su.domain_tag = fm.domain_tag;
    su.rows = segment_rows(fm.frames, config.seg_len, config.seg_len);
    out.utts.push_back(std::move(su));
  }
  return out;
}

SVectorTable init_svector_table(const std::vector<const SegmentedUtterance*>& utts,
                                const Model& model) {
  SVectorTable table;
  for (const SegmentedUtterance* u : utts) {
    if (u->n_segments() == 0) {
      log::warn("init_svector_table: utterance '" + u->utt_id +
                "' has no segments; skipped");
      continue;
    }
    BatchPosteriors post = encode_batch_means(model, u->rows);
    std::vector<Tensor> z2;
    const std::size_t d = model.config.dim_z2;
    z2.reserve(post.z2_mean.shape[0]);
    for (std::size_t i = 0; i < post.z2_mean.shape[0]; ++i) {
      Tensor v({d});
      std::copy(post.z2_mean.data.begin() + static_cast<std::ptrdiff_t>(i * d),
                post.z2_mean.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * d),
                v.data.begin());
      z2.push_back(std::move(v));
    }
    table.insert(u->utt_id,
                 estimate_svector_map(z2, model.config.var_z2, model.config.var_mu2));
  }
  return table;
}

HierarchicalSample hierarchical_sample(const TrainingCorpus& corpus, std::size_t k,
                                       const Model& model, RandomStream& rng) {
  if (corpus.utts.empty()) {
    throw ContractError("hierarchical_sample: empty corpus");
  }
  const std::size_t n = corpus.utts.size();
  const std::size_t take = std::min(k, n);
  std::vector<std::size_t> perm = rng.permutation(n);
  HierarchicalSample out;
  out.utt_indices.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(take));
  std::vector<const SegmentedUtterance*> sampled;
  sampled.reserve(take);
  for (std::size_t idx : out.utt_indices) sampled.push_back(&corpus.utts[idx]);
  out.table = init_svector_table(sampled, model);
  return out;
}

void write_history_csv(const std::vector<HistoryRow>& history,
                       const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("history: cannot open " + path);
  os << "epoch,split,loss_total,loss_recon,kl_z1,kl_z2,loss_disc,learning_rate\n";
  char buf[40];
  auto col = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << ',' << buf;
  };
  for (const HistoryRow& r : history) {
    os << r.epoch << ',' << r.split;
    col(r.loss_total);
    col(r.loss_recon);
    col(r.kl_z1);
    col(r.kl_z2);
    col(r.loss_disc);
    col(r.learning_rate);
    os << "\n";
  }
  if (!os) throw IoError("history: short write to " + path);
}

namespace {

constexpr std::uint64_t kValSeedSalt = 0x76616c6964ull;

struct EpochAccumulator {
  double total = 0.0, recon = 0.0, klz1 = 0.0, klz2 = 0.0, disc = 0.0;
  std::size_t count = 0;

  void add(const LossParts& parts, std::size_t batch_size) {
    const double w = static_cast<double>(batch_size);
    total += parts.total * w;
    recon += parts.recon * w;
    klz1 += parts.kl_z1 * w;
    klz2 += parts.kl_z2 * w;
    disc += parts.disc * w;
    count += batch_size;
  }

  HistoryRow row(std::size_t epoch, const std::string& split, double lr) const {
    HistoryRow r;
    r.epoch = epoch;
    r.split = split;
    const double n = count ? static_cast<double>(count) : 1.0;
    r.loss_total = total / n;
    r.loss_recon = -recon / n;
    r.kl_z1 = klz1 / n;
    r.kl_z2 = klz2 / n;
    r.loss_disc = -disc / n;
    r.learning_rate = lr;
    return r;
  }
};

SegmentBatch gather_batch(const TrainingCorpus& corpus,
                          const std::vector<std::size_t>& utt_of_pool,
                          const std::vector<std::size_t>& seg_of_pool,
                          const std::vector<std::size_t>& picks,
                          const ModelConfig& cfg) {
  SegmentBatch batch;
  const std::size_t width = cfg.seg_len * cfg.feat_dim;
  batch.x = Tensor({picks.size(), width});
  batch.utt_ids.reserve(picks.size());
  batch.inv_n_utt.reserve(picks.size());
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const SegmentedUtterance& u = corpus.utts[utt_of_pool[picks[i]]];
    const std::size_t seg = seg_of_pool[picks[i]];
    std::copy(u.rows.data.begin() + static_cast<std::ptrdiff_t>(seg * width),
              u.rows.data.begin() + static_cast<std::ptrdiff_t>((seg + 1) * width),
              batch.x.data.begin() + static_cast<std::ptrdiff_t>(i * width));
    batch.utt_ids.push_back(u.utt_id);
    batch.inv_n_utt.push_back(1.0 / static_cast<double>(u.n_segments()));
  }
  return batch;
}

// Mean non-discriminative lower bound over the given utterances, with
// MAP-estimated s-vectors and noise replayed from a fixed seed so epochs are
// comparable.
EpochAccumulator score_validation(const Model& model, const TrainingCorpus& corpus,
                                  const std::vector<std::size_t>& utt_indices,
                                  std::uint64_t seed) {
  EpochAccumulator acc;
  RandomStream rng(seed ^ kValSeedSalt);
  for (std::size_t idx : utt_indices) {
    const SegmentedUtterance& u = corpus.utts[idx];
    const std::size_t n = u.n_segments();
    if (n == 0) continue;
    BatchPosteriors post = encode_batch_means(model, u.rows);
    std::vector<Tensor> z2;
    const std::size_t d = model.config.dim_z2;
    for (std::size_t i = 0; i < n; ++i) {
      Tensor v({d});
      std::copy(post.z2_mean.data.begin() + static_cast<std::ptrdiff_t>(i * d),
                post.z2_mean.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * d),
                v.data.begin());
      z2.push_back(std::move(v));
    }
    Tensor svec =
        estimate_svector_map(z2, model.config.var_z2, model.config.var_mu2);

    SegmentBatch batch;
    batch.x = u.rows;
    batch.utt_ids.assign(n, u.utt_id);
    batch.inv_n_utt.assign(n, 1.0 / static_cast<double>(n));
    LossParts parts = lower_bound_parts(model, batch, {svec},
                                        std::vector<std::size_t>(n, 0), rng);
    acc.add(parts, n);
  }
  return acc;
}

}  // namespace

TrainResult train(const Corpus& corpus, const ModelConfig& model_config,
                  const TrainConfig& train_config) {
  model_config.validate();
  train_config.validate();
  if (corpus.empty()) throw ContractError("train: empty corpus");

  RandomStream rng(train_config.seed);
  TrainResult result;
  result.model.config = model_config;
  result.model.params = ModelParams::init(model_config, rng);

  TrainingCorpus segmented = segment_corpus(corpus, model_config);
  result.skipped_short = segmented.skipped_short;
  if (segmented.utts.empty()) {
    throw ContractError("train: no utterance is long enough for a segment");
  }

  // Hold out validation utterances when the halving rule needs them.
  std::vector<std::size_t> train_idx, val_idx;
  {
    const std::size_t n = segmented.utts.size();
    std::vector<std::size_t> perm = rng.permutation(n);
    std::size_t n_val = 0;
    if (train_config.lr_halving && n >= 2) {
      n_val = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(train_config.val_fraction *
                                                   static_cast<double>(n))));
      n_val = std::min(n_val, n - 1);
    }
    val_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  }

  // The sampler operates on the training subset only.
  TrainingCorpus train_view;
  for (std::size_t idx : train_idx) train_view.utts.push_back(segmented.utts[idx]);
  std::vector<std::size_t> val_view(val_idx.size());
  for (std::size_t i = 0; i < val_idx.size(); ++i) val_view[i] = val_idx[i];

  OptimizerState opt;
  LrController lr(train_config.learning_rate, train_config.lr_halving,
                  train_config.patience);
  ModelParams last_good = result.model.params;

  const std::size_t n_train = train_view.utts.size();
  const std::size_t k = std::min(train_config.utterance_batch, n_train);
  const std::size_t cycles = (n_train + k - 1) / k;

  for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
    EpochAccumulator train_acc;
    for (std::size_t cycle = 0; cycle < cycles; ++cycle) {
      HierarchicalSample hs = hierarchical_sample(train_view, k, result.model, rng);
      opt.drop_prefix("svec/");

      std::vector<std::size_t> utt_of_pool, seg_of_pool;
      for (std::size_t local : hs.utt_indices) {
        const std::size_t segs = train_view.utts[local].n_segments();
        for (std::size_t s = 0; s < segs; ++s) {
          utt_of_pool.push_back(local);
          seg_of_pool.push_back(s);
        }
      }
      std::vector<std::size_t> order = rng.permutation(utt_of_pool.size());

      for (std::size_t start = 0; start < order.size();
           start += train_config.segment_batch) {
        const std::size_t end =
            std::min(order.size(), start + train_config.segment_batch);
        std::vector<std::size_t> picks(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(end));
        SegmentBatch batch =
            gather_batch(train_view, utt_of_pool, seg_of_pool, picks, model_config);

        LossGradients lg =
            total_loss_gradients(result.model, batch, hs.table, rng);
        if (!std::isfinite(lg.parts.total)) {
          result.model.params = last_good;
          result.aborted = true;
          result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch);
          log::error("train: " + result.abort_reason + "; restored last checkpoint");
          return result;
        }

        std::vector<Tensor*> grad_ptrs;
        for (Tensor& g : lg.param_grads) grad_ptrs.push_back(&g);
        for (Tensor& g : lg.table_grads) grad_ptrs.push_back(&g);
        clip_gradients(grad_ptrs, train_config.clip_norm);

        std::vector<ParamRef> refs;
        std::size_t gi = 0;
        result.model.params.for_each([&](const std::string& name, Tensor& t) {
          refs.push_back(ParamRef{name, &t, &lg.param_grads[gi++]});
        });
        for (std::size_t row = 0; row < hs.table.size(); ++row) {
          refs.push_back(ParamRef{"svec/" + hs.table.ids()[row],
                                  &hs.table.row(row), &lg.table_grads[row]});
        }
        try {
          adam_step(refs, opt, lr.rate(), train_config);
        } catch (const NumericError& e) {
          result.model.params = last_good;
          result.aborted = true;
          result.abort_reason = e.what();
          log::error("train: aborted (" + result.abort_reason +
                     "); restored last checkpoint");
          return result;
        }
        train_acc.add(lg.parts, batch.size());
      }
    }

    result.history.push_back(train_acc.row(epoch, "train", lr.rate()));
    if (!val_view.empty()) {
      EpochAccumulator val_acc = score_validation(result.model, segmented, val_view,
                                                  train_config.seed);
      result.history.push_back(val_acc.row(epoch, "val", lr.rate()));
      if (lr.on_validation(result.history.back().loss_total)) {
        log::info("train: validation plateau, learning rate halved to " +
                  std::to_string(lr.rate()));
      }
    }
    if (!result.model.params.all_finite()) {
      result.model.params = last_good;
      result.aborted = true;
      result.abort_reason = "non-finite parameters at epoch " + std::to_string(epoch);
      log::error("train: " + result.abort_reason + "; restored last checkpoint");
      return result;
    }
    last_good = result.model.params;
  }
  return result;
}

}  // namespace fhvae
