#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "fhvae/corpus.hpp"
#include "fhvae/model.hpp"

namespace fhvae {

struct TrainConfig {
  std::size_t utterance_batch = 64;  // utterances per hierarchical sample
  std::size_t segment_batch = 32;    // segments per gradient step
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  double beta1 = 0.95;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool lr_halving = false;
  std::size_t patience = 1;   // epochs without improvement before halving
  double val_fraction = 0.1;  // held out when lr_halving is enabled
  double clip_norm = 5.0;     // global gradient norm; <= 0 disables

  void validate() const;
};

// Per-parameter Adam moments; the step count is per slot so freshly created
// table entries are bias-corrected from their own first step.
struct AdamSlot {
  Tensor m, v;
  std::size_t step = 0;
};

struct OptimizerState {
  std::unordered_map<std::string, AdamSlot> slots;
  void drop_prefix(const std::string& prefix);
};

struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  const Tensor* grad = nullptr;
};

// Bias-corrected Adam update over the given parameters. Verifies every
// gradient is finite before touching anything; a bad gradient aborts the
// whole step naming the parameter.
void adam_step(std::vector<ParamRef>& params, OptimizerState& state,
               double learning_rate, const TrainConfig& config);

// Scales the gradients in place so their joint norm is at most max_norm;
// returns the pre-clip norm.
double clip_gradients(std::vector<Tensor*>& grads, double max_norm);

// Validation-driven halving: lr is halved after `patience` consecutive
// epochs without improvement.
class LrController {
 public:
  LrController(double lr, bool enabled, std::size_t patience)
      : lr_(lr), enabled_(enabled), patience_(patience) {}
  // Returns true when this epoch halved the rate.
  bool on_validation(double val_loss);
  double rate() const { return lr_; }

 private:
  double lr_;
  bool enabled_;
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
};

// Training view of a corpus: per-utterance segment rows with hop = seg_len.
struct SegmentedUtterance {
  std::string utt_id;
  std::string domain_tag;
  Tensor rows;  // (N, seg_len*feat_dim)
  std::size_t n_segments() const { return rows.rank() == 2 ? rows.shape[0] : 0; }
};

struct TrainingCorpus {
  std::vector<SegmentedUtterance> utts;
  std::size_t skipped_short = 0;  // utterances below one segment, excluded
  std::size_t total_segments() const;
};

TrainingCorpus segment_corpus(const Corpus& corpus, const ModelConfig& config);

// MAP-initialized table for the given utterances (posterior means from the
// z2 encoder). Utterances without a full segment are skipped with a warning.
SVectorTable init_svector_table(const std::vector<const SegmentedUtterance*>& utts,
                                const Model& model);

struct HierarchicalSample {
  std::vector<std::size_t> utt_indices;  // into the training corpus
  SVectorTable table;
};

// Uniformly samples min(K, corpus size) utterances without replacement and
// builds their fresh table slice.
HierarchicalSample hierarchical_sample(const TrainingCorpus& corpus, std::size_t k,
                                       const Model& model, RandomStream& rng);

struct HistoryRow {
  std::size_t epoch = 0;
  std::string split;  // "train" | "val"
  double loss_total = 0.0;
  double loss_recon = 0.0;
  double kl_z1 = 0.0;
  double kl_z2 = 0.0;
  double loss_disc = 0.0;
  double learning_rate = 0.0;
};

// UTF-8 CSV: epoch, split, loss_total, loss_recon, kl_z1, kl_z2, loss_disc,
// learning_rate.
void write_history_csv(const std::vector<HistoryRow>& history,
                       const std::string& path);

struct TrainResult {
  Model model;
  std::vector<HistoryRow> history;
  bool aborted = false;
  std::string abort_reason;
  std::size_t skipped_short = 0;
};

TrainResult train(const Corpus& corpus, const ModelConfig& model_config,
                  const TrainConfig& train_config);

}  // namespace fhvae
