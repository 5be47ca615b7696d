// Command-line front end: synth-corpus | train | extract | pca | transform |
// eval | reconstruct. Every run directory receives the effective config, the
// seed and the version string so runs can be reproduced byte for byte.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <unordered_map>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "fhvae/augment.hpp"
#include "fhvae/corpus.hpp"
#include "fhvae/eval.hpp"
#include "fhvae/kernels.hpp"
#include "fhvae/log.hpp"
#include "fhvae/model.hpp"
#include "fhvae/run_config.hpp"
#include "fhvae/training.hpp"
#include "fhvae/version.hpp"

namespace fs = std::filesystem;
using namespace fhvae;

namespace {

void apply_workers(int workers) {
  if (workers == 1) {
    kernels::set_parallel(false);
    return;
  }
#ifdef _OPENMP
  if (workers > 1) omp_set_num_threads(workers);
#endif
  kernels::set_parallel(true);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_run_metadata(const std::string& dir, KeyValueConfig effective,
                        std::uint64_t seed, const std::string& command) {
  effective.set("run.command", command);
  effective.set("run.seed", std::to_string(seed));
  effective.set("run.version", kVersionString);
  std::ofstream os(fs::path(dir) / "config.txt");
  if (!os) throw IoError("cannot write config dump in " + dir);
  effective.dump(os);
}

// Defaults <- config file <- explicit flags, recorded back into the config
// so the dump shows what actually ran.
template <typename T>
void override_key(KeyValueConfig& cfg, const std::string& key,
                  const std::optional<T>& flag) {
  if (!flag.has_value()) return;
  if constexpr (std::is_same_v<T, double>) {
    cfg.set(key, fmt_double(*flag));
  } else {
    cfg.set(key, std::to_string(*flag));
  }
}

ModelConfig model_config_from(const KeyValueConfig& cfg, bool production_shape) {
  ModelConfig base = production_shape ? ModelConfig::production_shape() : ModelConfig{};
  ModelConfig mc;
  mc.feat_dim = cfg.get_size("model.feat_dim", base.feat_dim);
  mc.seg_len = cfg.get_size("model.seg_len", base.seg_len);
  mc.dim_z1 = cfg.get_size("model.dim_z1", base.dim_z1);
  mc.dim_z2 = cfg.get_size("model.dim_z2", base.dim_z2);
  mc.hidden_dim = cfg.get_size("model.hidden_dim", base.hidden_dim);
  mc.num_layers = cfg.get_size("model.num_layers", base.num_layers);
  mc.var_mu2 = cfg.get_double("model.var_mu2", base.var_mu2);
  mc.var_z1 = cfg.get_double("model.var_z1", base.var_z1);
  mc.var_z2 = cfg.get_double("model.var_z2", base.var_z2);
  mc.alpha = cfg.get_double("model.alpha", base.alpha);
  return mc;
}

TrainConfig train_config_from(const KeyValueConfig& cfg) {
  TrainConfig base;
  TrainConfig tc;
  tc.utterance_batch = cfg.get_size("train.utterance_batch", base.utterance_batch);
  tc.segment_batch = cfg.get_size("train.segment_batch", base.segment_batch);
  tc.epochs = cfg.get_size("train.epochs", base.epochs);
  tc.learning_rate = cfg.get_double("train.learning_rate", base.learning_rate);
  tc.beta1 = cfg.get_double("train.beta1", base.beta1);
  tc.beta2 = cfg.get_double("train.beta2", base.beta2);
  tc.epsilon = cfg.get_double("train.epsilon", base.epsilon);
  tc.seed = cfg.get_u64("train.seed", base.seed);
  tc.lr_halving = cfg.get_bool("train.lr_halving", base.lr_halving);
  tc.patience = cfg.get_size("train.patience", base.patience);
  tc.val_fraction = cfg.get_double("train.val_fraction", base.val_fraction);
  tc.clip_norm = cfg.get_double("train.clip_norm", base.clip_norm);
  return tc;
}

void record_model_config(KeyValueConfig& cfg, const ModelConfig& mc) {
  cfg.set("model.feat_dim", std::to_string(mc.feat_dim));
  cfg.set("model.seg_len", std::to_string(mc.seg_len));
  cfg.set("model.dim_z1", std::to_string(mc.dim_z1));
  cfg.set("model.dim_z2", std::to_string(mc.dim_z2));
  cfg.set("model.hidden_dim", std::to_string(mc.hidden_dim));
  cfg.set("model.num_layers", std::to_string(mc.num_layers));
  cfg.set("model.var_mu2", fmt_double(mc.var_mu2));
  cfg.set("model.var_z1", fmt_double(mc.var_z1));
  cfg.set("model.var_z2", fmt_double(mc.var_z2));
  cfg.set("model.alpha", fmt_double(mc.alpha));
}

void record_train_config(KeyValueConfig& cfg, const TrainConfig& tc) {
  cfg.set("train.utterance_batch", std::to_string(tc.utterance_batch));
  cfg.set("train.segment_batch", std::to_string(tc.segment_batch));
  cfg.set("train.epochs", std::to_string(tc.epochs));
  cfg.set("train.learning_rate", fmt_double(tc.learning_rate));
  cfg.set("train.beta1", fmt_double(tc.beta1));
  cfg.set("train.beta2", fmt_double(tc.beta2));
  cfg.set("train.epsilon", fmt_double(tc.epsilon));
  cfg.set("train.seed", std::to_string(tc.seed));
  cfg.set("train.lr_halving", tc.lr_halving ? "true" : "false");
  cfg.set("train.patience", std::to_string(tc.patience));
  cfg.set("train.val_fraction", fmt_double(tc.val_fraction));
  cfg.set("train.clip_norm", fmt_double(tc.clip_norm));
}

// --- synth-corpus ------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  std::optional<std::size_t> n_utts, segs_min, segs_max, classes, feat_dim, seg_len;
  std::optional<double> noise;
  std::uint64_t seed = 0;
  bool production_shape = false;
};

int run_synth(const SynthArgs& a) {
  SynthConfig sc = a.production_shape ? SynthConfig::production_shape()
                                 : SynthConfig::standard_preset();
  if (a.n_utts) sc.n_utts = *a.n_utts;
  if (a.segs_min) sc.segs_min = *a.segs_min;
  if (a.segs_max) sc.segs_max = *a.segs_max;
  if (a.classes) sc.content_classes = *a.classes;
  if (a.feat_dim) sc.feat_dim = *a.feat_dim;
  if (a.seg_len) sc.seg_len = *a.seg_len;
  if (a.noise) sc.noise_std = *a.noise;
  sc.seed = a.seed;

  SynthResult result = synth_corpus(sc);
  fs::create_directories(a.out_dir);
  std::string manifest = save_corpus(result.corpus, a.out_dir);
  result.ground_truth.save((fs::path(a.out_dir) / "ground_truth.tsv").string());

  KeyValueConfig cfg;
  cfg.set("synth.n_utts", std::to_string(sc.n_utts));
  cfg.set("synth.segs_min", std::to_string(sc.segs_min));
  cfg.set("synth.segs_max", std::to_string(sc.segs_max));
  cfg.set("synth.content_classes", std::to_string(sc.content_classes));
  cfg.set("synth.feat_dim", std::to_string(sc.feat_dim));
  cfg.set("synth.seg_len", std::to_string(sc.seg_len));
  cfg.set("synth.noise_std", fmt_double(sc.noise_std));
  write_run_metadata(a.out_dir, cfg, sc.seed, "synth-corpus");

  std::cout << "wrote " << result.corpus.size() << " utterances to " << manifest
            << "\n";
  return 0;
}

// --- train ---------------------------------------------------------------------

struct TrainArgs {
  std::string manifest, out_dir, config_path;
  bool production_shape = false;
  std::optional<std::size_t> feat_dim, seg_len, dim_z1, dim_z2, hidden, layers;
  std::optional<double> var_mu2, var_z1, var_z2, alpha;
  std::optional<std::size_t> epochs, utt_batch, seg_batch, patience;
  std::optional<double> lr, beta1, beta2, epsilon, val_fraction, clip_norm;
  std::optional<std::uint64_t> seed;
  std::optional<bool> lr_halving;
};

int run_train(const TrainArgs& a) {
  KeyValueConfig cfg = a.config_path.empty() ? KeyValueConfig{}
                                             : KeyValueConfig::parse_file(a.config_path);
  override_key(cfg, "model.feat_dim", a.feat_dim);
  override_key(cfg, "model.seg_len", a.seg_len);
  override_key(cfg, "model.dim_z1", a.dim_z1);
  override_key(cfg, "model.dim_z2", a.dim_z2);
  override_key(cfg, "model.hidden_dim", a.hidden);
  override_key(cfg, "model.num_layers", a.layers);
  override_key(cfg, "model.var_mu2", a.var_mu2);
  override_key(cfg, "model.var_z1", a.var_z1);
  override_key(cfg, "model.var_z2", a.var_z2);
  override_key(cfg, "model.alpha", a.alpha);
  override_key(cfg, "train.epochs", a.epochs);
  override_key(cfg, "train.utterance_batch", a.utt_batch);
  override_key(cfg, "train.segment_batch", a.seg_batch);
  override_key(cfg, "train.learning_rate", a.lr);
  override_key(cfg, "train.beta1", a.beta1);
  override_key(cfg, "train.beta2", a.beta2);
  override_key(cfg, "train.epsilon", a.epsilon);
  override_key(cfg, "train.patience", a.patience);
  override_key(cfg, "train.val_fraction", a.val_fraction);
  override_key(cfg, "train.clip_norm", a.clip_norm);
  override_key(cfg, "train.seed", a.seed);
  if (a.lr_halving) cfg.set("train.lr_halving", *a.lr_halving ? "true" : "false");

  Corpus corpus = load_corpus(a.manifest);
  if (!cfg.has("model.feat_dim") && !corpus.empty()) {
    cfg.set("model.feat_dim", std::to_string(corpus.utterances[0].feat_dim()));
  }
  ModelConfig mc = model_config_from(cfg, a.production_shape);
  TrainConfig tc = train_config_from(cfg);

  fs::create_directories(a.out_dir);
  TrainResult result = train(corpus, mc, tc);
  save_model(result.model, (fs::path(a.out_dir) / "model.bin").string());
  write_history_csv(result.history, (fs::path(a.out_dir) / "history.csv").string());

  record_model_config(cfg, mc);
  record_train_config(cfg, tc);
  write_run_metadata(a.out_dir, cfg, tc.seed, "train");

  if (result.skipped_short > 0) {
    std::cout << "skipped " << result.skipped_short
              << " utterances shorter than one segment\n";
  }
  if (result.aborted) {
    std::cerr << "training aborted: " << result.abort_reason
              << " (last good checkpoint saved)\n";
    return 1;
  }
  std::cout << "trained " << tc.epochs << " epochs; final loss "
            << (result.history.empty() ? 0.0 : result.history.back().loss_total)
            << "; model at " << (fs::path(a.out_dir) / "model.bin").string() << "\n";
  return 0;
}

// --- extract ---------------------------------------------------------------------

int run_extract(const std::string& model_path, const std::string& manifest,
                const std::string& out_path) {
  Model model = load_model(model_path);
  Corpus corpus = load_corpus(manifest);
  std::vector<std::pair<std::string, Tensor>> svectors;
  std::size_t skipped = 0;
  for (const FeatureMatrix& fm : corpus.utterances) {
    auto lat = encode_utterance(model, fm);
    if (!lat) {
      ++skipped;
      continue;
    }
    svectors.emplace_back(fm.utt_id, lat->s_vector);
  }
  if (svectors.empty()) {
    throw ContractError("extract: no utterance is long enough for a segment");
  }
  save_svectors(svectors, out_path);
  std::cout << "wrote " << svectors.size() << " s-vectors to " << out_path;
  if (skipped) std::cout << " (skipped " << skipped << " short utterances)";
  std::cout << "\n";
  return 0;
}

// --- pca -----------------------------------------------------------------------

int run_pca(const std::string& model_path, const std::string& svectors_path,
            const std::string& out_path) {
  Model model = load_model(model_path);
  auto svectors = load_svectors(svectors_path);
  std::vector<Tensor> vecs;
  for (auto& [id, v] : svectors) {
    if (v.numel() != model.config.dim_z2) {
      throw ContractError("pca: s-vector for '" + id + "' has length " +
                          std::to_string(v.numel()) + ", model expects " +
                          std::to_string(model.config.dim_z2));
    }
    vecs.push_back(std::move(v));
  }
  PerturbationBasis basis = pca_svectors(vecs);
  save_basis(basis, model.config, out_path);
  std::cout << "wrote perturbation basis (" << basis.m_utterances
            << " utterances) to " << out_path << "\n";
  return 0;
}

// --- transform -------------------------------------------------------------------

struct TransformArgs {
  std::string model_path, manifest, out_dir;
  bool reconstruct = false;
  std::string replace_from;  // s-vector file of target utterances
  bool perturb = false;
  std::string basis_path;
  std::string scheme = "proposed";
  double gamma = 1.0;
  std::uint64_t seed = 0;
  bool drop_tail = false;
};

int run_transform(const TransformArgs& a) {
  const int modes = (a.reconstruct ? 1 : 0) + (a.replace_from.empty() ? 0 : 1) +
                    (a.perturb ? 1 : 0);
  if (modes != 1) {
    throw ContractError(
        "transform: choose exactly one of --reconstruct, --replace-from, --perturb");
  }
  Model model = load_model(a.model_path);
  Corpus corpus = load_corpus(a.manifest);
  fs::create_directories(a.out_dir);

  TransformOptions options;
  options.drop_tail = a.drop_tail;
  PerturbationBasis basis;
  std::vector<std::pair<std::string, Tensor>> targets;
  if (a.reconstruct) {
    options.mode = TransformOptions::Mode::kReconstruct;
  } else if (!a.replace_from.empty()) {
    options.mode = TransformOptions::Mode::kReplace;
    targets = load_svectors(a.replace_from);
    if (targets.empty()) throw ContractError("transform: empty target s-vector file");
  } else {
    options.mode = TransformOptions::Mode::kPerturb;
    if (a.basis_path.empty()) {
      throw ContractError("transform: --perturb needs --basis");
    }
    basis = load_basis(a.basis_path);
    options.basis = &basis;
    options.scheme = parse_scheme(a.scheme);
    options.gamma = a.gamma;
  }

  RandomStream master(a.seed);
  const std::size_t n = corpus.size();
  std::vector<std::optional<FeatureMatrix>> outputs(n);
  std::vector<std::string> chosen_target(n);
  std::string failure;

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      TransformOptions local = options;
      if (local.mode == TransformOptions::Mode::kReplace) {
        RandomStream pick = master.fork(0x7461 + static_cast<std::uint64_t>(i));
        const auto& [tid, tvec] = targets[pick.uniform_index(targets.size())];
        local.target_svector = tvec;
        chosen_target[static_cast<std::size_t>(i)] = tid;
      }
      RandomStream rng = master.fork(static_cast<std::uint64_t>(i));
      outputs[static_cast<std::size_t>(i)] =
          transform_utterance(model, corpus.utterances[static_cast<std::size_t>(i)],
                              local, rng);
    } catch (const std::exception& e) {
#ifdef _OPENMP
#pragma omp critical
#endif
      failure = e.what();
    }
  }
  if (!failure.empty()) throw ContractError("transform: " + failure);

  Corpus transformed;
  std::vector<std::pair<std::string, std::string>> pairs;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!outputs[i]) {
      ++skipped;
      continue;
    }
    if (options.mode == TransformOptions::Mode::kReplace) {
      pairs.emplace_back(outputs[i]->utt_id, chosen_target[i]);
    }
    transformed.utterances.push_back(std::move(*outputs[i]));
  }
  if (transformed.empty()) {
    throw ContractError("transform: every utterance was shorter than one segment");
  }
  std::string manifest = save_corpus(transformed, a.out_dir);
  if (!pairs.empty()) {
    std::ofstream os(fs::path(a.out_dir) / "pairs.tsv");
    for (const auto& [src, tgt] : pairs) os << src << '\t' << tgt << "\n";
  }

  KeyValueConfig cfg;
  cfg.set("transform.mode", a.reconstruct ? "reconstruct"
                            : a.perturb   ? "perturb"
                                          : "replace");
  if (a.perturb) {
    cfg.set("transform.scheme", a.scheme);
    cfg.set("transform.gamma", fmt_double(a.gamma));
    cfg.set("transform.basis", a.basis_path);
  }
  if (!a.replace_from.empty()) cfg.set("transform.replace_from", a.replace_from);
  cfg.set("transform.drop_tail", a.drop_tail ? "true" : "false");
  cfg.set("transform.model", a.model_path);
  write_run_metadata(a.out_dir, cfg, a.seed, "transform");

  std::cout << "transformed " << transformed.size() << " utterances into "
            << manifest;
  if (skipped) std::cout << " (skipped " << skipped << " short utterances)";
  std::cout << "\n";
  return 0;
}

// --- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string model_path, manifest;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  std::string out_dir;
  // transfer inputs
  std::string outputs_manifest, ground_truth_path, pairs_path;
};

int run_eval(const EvalArgs& a) {
  const bool want_latents = !a.model_path.empty() && !a.manifest.empty();
  const bool want_transfer = !a.outputs_manifest.empty() &&
                             !a.ground_truth_path.empty() && !a.pairs_path.empty();
  if (!want_latents && !want_transfer) {
    throw ContractError(
        "eval: provide --model and --manifest for latent diagnostics and/or "
        "--outputs, --ground-truth and --pairs for transfer fidelity");
  }

  DisentanglementReport report;
  report.has_latents = want_latents;

  if (want_latents) {
    Model model = load_model(a.model_path);
    Corpus corpus = load_corpus(a.manifest);
    std::vector<std::vector<Tensor>> groups_z1, groups_z2;
    std::vector<Tensor> flat_z1, flat_z2;
    std::vector<std::size_t> labels;
    std::unordered_map<std::string, std::size_t> tag_ids;
    for (const FeatureMatrix& fm : corpus.utterances) {
      auto lat = encode_utterance(model, fm);
      if (!lat) continue;
      groups_z1.push_back(lat->z1_means);
      groups_z2.push_back(lat->z2_means);
      auto [it, inserted] = tag_ids.try_emplace(fm.domain_tag, tag_ids.size());
      for (std::size_t s = 0; s < lat->z1_means.size(); ++s) {
        flat_z1.push_back(lat->z1_means[s]);
        flat_z2.push_back(lat->z2_means[s]);
        labels.push_back(it->second);
      }
    }
    report.variance_ratio_z1 = variance_ratio(groups_z1);
    report.variance_ratio_z2 = variance_ratio(groups_z2);
    if (tag_ids.size() >= 2) {
      report.probe_acc_z1 = probe_accuracy(flat_z1, labels, a.folds, a.seed);
      report.probe_acc_z2 = probe_accuracy(flat_z2, labels, a.folds, a.seed);
    } else {
      throw ContractError(
          "eval: the manifest carries fewer than 2 domain tags; the nuisance "
          "probe needs labeled domains");
    }
  }

  if (want_transfer) {
    Corpus outputs = load_corpus(a.outputs_manifest);
    SyntheticGroundTruth gt = SyntheticGroundTruth::load(a.ground_truth_path);
    std::unordered_map<std::string, std::string> pair_of;
    {
      std::ifstream is(a.pairs_path);
      if (!is) throw IoError("eval: cannot open " + a.pairs_path);
      std::string line;
      while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
          throw IoError("eval: malformed pairs line: " + line);
        }
        pair_of[line.substr(0, tab)] = line.substr(tab + 1);
      }
    }
    const std::size_t seg_len = gt.config().seg_len;
    std::vector<SegmentTransferCase> cases;
    for (const FeatureMatrix& fm : outputs.utterances) {
      auto it = pair_of.find(fm.utt_id);
      if (it == pair_of.end()) continue;
      const UttGroundTruth& src = gt.utt(fm.utt_id);
      const UttGroundTruth& tgt = gt.utt(it->second);
      std::vector<Tensor> segs = segment_utterance(fm.frames, seg_len, seg_len);
      const std::size_t usable = std::min(segs.size(), src.classes.size());
      for (std::size_t s = 0; s < usable; ++s) {
        SegmentTransferCase c;
        c.output = segs[s];
        c.target_render =
            gt.render_segment(src.classes[s], tgt.offset, tgt.tilt);
        c.source_render =
            gt.render_segment(src.classes[s], src.offset, src.tilt);
        cases.push_back(std::move(c));
      }
    }
    report.transfer_fidelity = transfer_fidelity(cases);
    report.has_transfer = true;
  }

  write_report(report, std::cout);
  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
    std::ofstream txt(fs::path(a.out_dir) / "report.txt");
    write_report(report, txt);
    std::ofstream csv(fs::path(a.out_dir) / "report.csv");
    csv << report_csv_header() << "\n" << report_csv_row(report) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Factorized hierarchical VAE for sequence-level nuisance "
               "transformation of feature corpora"};
  app.set_version_flag("--version", kVersionString);
  app.require_subcommand(1);
  int workers = 0;
  app.add_option("--workers", workers,
                 "worker threads (1 disables parallel kernels; determinism is "
                 "guaranteed at 1)");

  SynthArgs synth;
  CLI::App* synth_cmd =
      app.add_subcommand("synth-corpus", "generate a two-domain synthetic corpus");
  synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();
  synth_cmd->add_option("--n-utts", synth.n_utts, "number of utterances");
  synth_cmd->add_option("--segs-min", synth.segs_min, "minimum segments per utterance");
  synth_cmd->add_option("--segs-max", synth.segs_max, "maximum segments per utterance");
  synth_cmd->add_option("--classes", synth.classes, "content classes");
  synth_cmd->add_option("--feat-dim", synth.feat_dim, "feature dimension");
  synth_cmd->add_option("--seg-len", synth.seg_len, "frames per segment");
  synth_cmd->add_option("--noise", synth.noise, "frame noise stddev");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_flag("--production-shape", synth.production_shape,
                      "80-dim frames, 20-frame segments");

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a manifest");
  train_cmd->add_option("--manifest", train_args.manifest, "corpus manifest")->required();
  train_cmd->add_option("--out", train_args.out_dir, "run directory")->required();
  train_cmd->add_option("--config", train_args.config_path, "key=value config file");
  train_cmd->add_flag("--production-shape", train_args.production_shape,
                      "base the model on the production geometry");
  train_cmd->add_option("--feat-dim", train_args.feat_dim, "frame dimension");
  train_cmd->add_option("--seg-len", train_args.seg_len, "frames per segment");
  train_cmd->add_option("--dim-z1", train_args.dim_z1, "segment latent size");
  train_cmd->add_option("--dim-z2", train_args.dim_z2, "sequence latent size");
  train_cmd->add_option("--hidden", train_args.hidden, "recurrent width");
  train_cmd->add_option("--layers", train_args.layers, "recurrent layers");
  train_cmd->add_option("--var-mu2", train_args.var_mu2, "s-vector prior variance");
  train_cmd->add_option("--var-z1", train_args.var_z1, "segment latent prior variance");
  train_cmd->add_option("--var-z2", train_args.var_z2,
                        "sequence latent conditional prior variance");
  train_cmd->add_option("--alpha", train_args.alpha, "discriminative weight");
  train_cmd->add_option("--epochs", train_args.epochs, "training epochs");
  train_cmd->add_option("--utt-batch", train_args.utt_batch,
                        "utterances per hierarchical sample");
  train_cmd->add_option("--seg-batch", train_args.seg_batch,
                        "segments per gradient step");
  train_cmd->add_option("--lr", train_args.lr, "learning rate");
  train_cmd->add_option("--beta1", train_args.beta1, "Adam beta1");
  train_cmd->add_option("--beta2", train_args.beta2, "Adam beta2");
  train_cmd->add_option("--epsilon", train_args.epsilon, "Adam epsilon");
  train_cmd->add_option("--seed", train_args.seed, "training seed");
  train_cmd->add_flag("--lr-halving{true},--no-lr-halving{false}",
                      train_args.lr_halving, "halve the rate on validation plateaus");
  train_cmd->add_option("--patience", train_args.patience, "plateau epochs before halving");
  train_cmd->add_option("--val-fraction", train_args.val_fraction,
                        "validation hold-out fraction");
  train_cmd->add_option("--clip-norm", train_args.clip_norm,
                        "global gradient norm bound (0 disables)");

  std::string ex_model, ex_manifest, ex_out;
  CLI::App* extract_cmd =
      app.add_subcommand("extract", "write per-utterance MAP s-vectors");
  extract_cmd->add_option("--model", ex_model, "model checkpoint")->required();
  extract_cmd->add_option("--manifest", ex_manifest, "corpus manifest")->required();
  extract_cmd->add_option("--out", ex_out, "output s-vector file")->required();

  std::string pca_model, pca_svectors, pca_out;
  CLI::App* pca_cmd =
      app.add_subcommand("pca", "build a perturbation basis from s-vectors");
  pca_cmd->add_option("--model", pca_model, "model checkpoint")->required();
  pca_cmd->add_option("--svectors", pca_svectors, "s-vector file")->required();
  pca_cmd->add_option("--out", pca_out, "output basis file")->required();

  TransformArgs tf;
  CLI::App* tf_cmd =
      app.add_subcommand("transform", "rewrite a corpus with edited latents");
  tf_cmd->add_option("--model", tf.model_path, "model checkpoint")->required();
  tf_cmd->add_option("--manifest", tf.manifest, "source manifest")->required();
  tf_cmd->add_option("--out", tf.out_dir, "output directory")->required();
  tf_cmd->add_flag("--reconstruct", tf.reconstruct, "identity latent edit");
  tf_cmd->add_option("--replace-from", tf.replace_from,
                     "target s-vector file; a random target is drawn per utterance");
  tf_cmd->add_flag("--perturb", tf.perturb, "add a random perturbation per utterance");
  tf_cmd->add_option("--basis", tf.basis_path, "perturbation basis file");
  tf_cmd->add_option("--scheme", tf.scheme, "proposed | rev-p | uni-p");
  tf_cmd->add_option("--gamma", tf.gamma, "perturbation scale");
  tf_cmd->add_option("--seed", tf.seed, "sampling seed");
  tf_cmd->add_flag("--drop-tail", tf.drop_tail,
                   "drop frames past the last full segment instead of copying them");

  TransformArgs rc;
  CLI::App* rc_cmd = app.add_subcommand("reconstruct",
                                        "decode posterior means without edits");
  rc_cmd->add_option("--model", rc.model_path, "model checkpoint")->required();
  rc_cmd->add_option("--manifest", rc.manifest, "source manifest")->required();
  rc_cmd->add_option("--out", rc.out_dir, "output directory")->required();
  rc_cmd->add_option("--seed", rc.seed, "seed (kept for directory metadata)");
  rc_cmd->add_flag("--drop-tail", rc.drop_tail,
                   "drop frames past the last full segment instead of copying them");

  EvalArgs ev;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "disentanglement and transfer diagnostics");
  eval_cmd->add_option("--model", ev.model_path, "model checkpoint");
  eval_cmd->add_option("--manifest", ev.manifest, "corpus manifest");
  eval_cmd->add_option("--folds", ev.folds, "probe cross-validation folds");
  eval_cmd->add_option("--seed", ev.seed, "probe fold shuffle seed");
  eval_cmd->add_option("--out", ev.out_dir, "report directory");
  eval_cmd->add_option("--outputs", ev.outputs_manifest,
                       "manifest of transformed outputs");
  eval_cmd->add_option("--ground-truth", ev.ground_truth_path,
                       "synthetic ground truth file");
  eval_cmd->add_option("--pairs", ev.pairs_path, "source-target pairs file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  apply_workers(workers);
  try {
    if (synth_cmd->parsed()) return run_synth(synth);
    if (train_cmd->parsed()) return run_train(train_args);
    if (extract_cmd->parsed()) return run_extract(ex_model, ex_manifest, ex_out);
    if (pca_cmd->parsed()) return run_pca(pca_model, pca_svectors, pca_out);
    if (tf_cmd->parsed()) return run_transform(tf);
    if (rc_cmd->parsed()) {
      TransformArgs alias = rc;
      alias.reconstruct = true;
      return run_transform(alias);
    }
    if (eval_cmd->parsed()) return run_eval(ev);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 2;
}
