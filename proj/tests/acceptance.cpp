// Acceptance suite: one criterion per section, one PASS/FAIL line each, with
// the runtime bound enforced alongside the metric. Exits non-zero if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fhvae/augment.hpp"
#include "fhvae/corpus.hpp"
#include "fhvae/eval.hpp"
#include "fhvae/kernels.hpp"
#include "fhvae/model.hpp"
#include "fhvae/training.hpp"

using namespace fhvae;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void verdict(bool ok, const std::string& name, const std::string& detail,
             double elapsed, double budget) {
  const bool in_time = elapsed < budget;
  if (ok && in_time) {
    std::printf("[PASS] %-28s %s (%.1fs, budget %.0fs)\n", name.c_str(),
                detail.c_str(), elapsed, budget);
  } else {
    std::printf("[FAIL] %-28s %s (%.1fs, budget %.0fs)%s\n", name.c_str(),
                detail.c_str(), elapsed, budget,
                in_time ? "" : " [over budget]");
    ++g_failures;
  }
  std::fflush(stdout);
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0,
                double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c, d);
  return buf;
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape &&
         std::memcmp(a.data.data(), b.data.data(), a.numel() * sizeof(double)) == 0;
}

// The committed reference configuration for the disentanglement and transfer
// criteria; thresholds in the checks below are frozen against this run.
SynthConfig reference_corpus_config() {
  SynthConfig sc = SynthConfig::standard_preset();
  sc.seed = 42;
  return sc;
}

ModelConfig reference_model_config() {
  ModelConfig mc;
  mc.feat_dim = 8;
  mc.seg_len = 10;
  mc.dim_z1 = 4;
  mc.dim_z2 = 8;
  mc.hidden_dim = 64;
  mc.num_layers = 1;
  mc.var_mu2 = 1.0;
  mc.var_z1 = 1.0;
  mc.var_z2 = 0.25;
  mc.alpha = 10.0;
  return mc;
}

TrainConfig reference_train_config() {
  TrainConfig tc;
  tc.epochs = 20;
  tc.learning_rate = 3e-3;
  tc.utterance_batch = 64;
  tc.segment_batch = 32;
  tc.seed = 1;
  return tc;
}

// ---------------------------------------------------------------------------

void criterion_wer_scope() {
  std::printf(
      "[N/A ] word-error-rate results    require a full conversational corpus "
      "and ASR stack; the property criteria below stand in at desk scale\n");
}

void criterion_gradient_correctness() {
  auto t0 = Clock::now();
  ModelConfig cfg;
  cfg.feat_dim = 8;
  cfg.seg_len = 10;
  cfg.dim_z1 = 3;
  cfg.dim_z2 = 3;
  cfg.hidden_dim = 6;
  RandomStream prng(101);
  Model model{cfg, ModelParams::init(cfg, prng)};

  // Two utterances, three segments each.
  RandomStream data_rng(102);
  Corpus corpus;
  for (int u = 0; u < 2; ++u) {
    FeatureMatrix fm;
    fm.utt_id = "utt" + std::to_string(u);
    fm.frames = data_rng.uniform_tensor({30, cfg.feat_dim}, -1.0, 1.0);
    corpus.utterances.push_back(std::move(fm));
  }
  TrainingCorpus segmented = segment_corpus(corpus, cfg);
  std::vector<const SegmentedUtterance*> utts;
  for (const auto& u : segmented.utts) utts.push_back(&u);
  SVectorTable table = init_svector_table(utts, model);

  SegmentBatch batch;
  batch.x = Tensor({6, cfg.seg_len * cfg.feat_dim});
  for (std::size_t u = 0; u < 2; ++u) {
    const Tensor& rows = segmented.utts[u].rows;
    std::copy(rows.data.begin(), rows.data.end(),
              batch.x.data.begin() +
                  static_cast<std::ptrdiff_t>(u * 3 * batch.x.shape[1]));
    for (int s = 0; s < 3; ++s) {
      batch.utt_ids.push_back(segmented.utts[u].utt_id);
      batch.inv_n_utt.push_back(1.0 / 3.0);
    }
  }

  // h = 1e-4 balances central-difference truncation against cancellation
  // noise at this loss magnitude (|loss| ~ 1e2).
  FdReport report = finite_diff_check_total_loss(model, batch, table, 271828, 1e-4);
  verdict(report.max_rel_err <= 1e-4, "gradient-correctness",
          fmt("max rel err %.3g (tol 1e-4)", report.max_rel_err) +
              (report.worst.empty() ? "" : " @" + report.worst),
          seconds_since(t0), 60.0);
}

void criterion_map_oracle() {
  auto t0 = Clock::now();
  RandomStream rng(333);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t d = 2 + rng.uniform_index(6);
    const std::size_t n = 1 + rng.uniform_index(8);
    const double var_z2 = rng.uniform(0.05, 2.0);
    const double var_mu2 = rng.uniform(0.25, 4.0);
    std::vector<Tensor> zs;
    for (std::size_t i = 0; i < n; ++i) zs.push_back(rng.normal_tensor({d}));

    // Independent oracle: gradient ascent on the posterior objective
    // log N(mu | 0, var_mu2 I) + sum_n log N(z_n | mu, var_z2 I).
    Tensor mu({d});
    const double lr = 0.05 * var_z2 / static_cast<double>(n + 1);
    for (int it = 0; it < 40000; ++it) {
      for (std::size_t k = 0; k < d; ++k) {
        double g = -mu[k] / var_mu2;
        for (const Tensor& z : zs) g += (z[k] - mu[k]) / var_z2;
        mu[k] += lr * g;
      }
    }
    Tensor closed = estimate_svector_map(zs, var_z2, var_mu2);
    for (std::size_t k = 0; k < d; ++k) {
      worst = std::max(worst, std::abs(closed[k] - mu[k]));
    }
  }
  verdict(worst <= 1e-6, "map-oracle",
          fmt("max |closed-form - argmax| %.3g over 20 cases (tol 1e-6)", worst),
          seconds_since(t0), 5.0);
}

void criterion_perturbation_norms() {
  auto t0 = Clock::now();
  // Random basis with D = 8 from a PCA of a random cloud.
  RandomStream rng(444);
  std::vector<Tensor> cloud;
  for (int i = 0; i < 64; ++i) {
    Tensor p = rng.normal_tensor({8});
    for (std::size_t k = 0; k < 8; ++k) p[k] *= 0.2 + 0.6 * static_cast<double>(k);
    cloud.push_back(std::move(p));
  }
  PerturbationBasis basis = pca_svectors(cloud);
  double sigma_sq = 0.0;
  for (double s : basis.sigma.data) sigma_sq += s * s;

  double worst_rel = 0.0;
  for (double gamma : {1.0, 1.5}) {
    for (PerturbScheme scheme : {PerturbScheme::kProposed, PerturbScheme::kReversed,
                                 PerturbScheme::kUniform}) {
      const int draws = 100000;
      double acc = 0.0;
      for (int i = 0; i < draws; ++i) {
        Tensor p = sample_perturbation(basis, gamma, scheme, rng);
        double sq = 0.0;
        for (double v : p.data) sq += v * v;
        acc += sq;
      }
      const double expect = gamma * gamma * sigma_sq;
      worst_rel = std::max(worst_rel, std::abs(acc / draws - expect) / expect);
    }
  }
  verdict(worst_rel <= 0.02, "perturbation-norm-equality",
          fmt("max relative deviation of E||p||^2 %.4f over 3 schemes x "
              "gamma {1.0, 1.5} (tol 0.02)",
              worst_rel),
          seconds_since(t0), 10.0);
}

struct ReferenceRun {
  SynthResult synth;
  Model model;
  bool trained = false;
};

void criterion_disentanglement(ReferenceRun& ref) {
  auto t0 = Clock::now();
  ref.synth = synth_corpus(reference_corpus_config());
  TrainResult result =
      train(ref.synth.corpus, reference_model_config(), reference_train_config());
  ref.model = result.model;
  ref.trained = !result.aborted;

  std::vector<std::vector<Tensor>> groups_z1, groups_z2;
  std::vector<Tensor> flat_z1, flat_z2;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < ref.synth.corpus.size(); ++i) {
    auto lat = encode_utterance(ref.model, ref.synth.corpus.utterances[i]);
    if (!lat) continue;
    groups_z1.push_back(lat->z1_means);
    groups_z2.push_back(lat->z2_means);
    for (std::size_t s = 0; s < lat->z1_means.size(); ++s) {
      flat_z1.push_back(lat->z1_means[s]);
      flat_z2.push_back(lat->z2_means[s]);
      labels.push_back(ref.synth.ground_truth.utts()[i].domain);
    }
  }
  const double vr_z1 = variance_ratio(groups_z1);
  const double vr_z2 = variance_ratio(groups_z2);
  const double probe_z1 = probe_accuracy(flat_z1, labels, 5, 0);
  const double probe_z2 = probe_accuracy(flat_z2, labels, 5, 0);
  const double chance = 0.5;  // balanced two-domain preset

  const bool ok = ref.trained && vr_z2 >= 0.7 && vr_z1 <= 0.3 &&
                  probe_z2 >= 0.9 && probe_z1 <= chance + 0.15;
  verdict(ok, "disentanglement",
          fmt("vr_z2 %.3f (>=0.7), vr_z1 %.3f (<=0.3), probe_z2 %.3f (>=0.9), "
              "probe_z1 %.3f (<=0.65)",
              vr_z2, vr_z1, probe_z2, probe_z1),
          seconds_since(t0), 600.0);
}

void criterion_short_utterance() {
  auto t0 = Clock::now();
  // Same nuisance vector for every utterance; segment latents add unit prior
  // noise. The mean-based estimate must be markedly noisier at N=2 than at
  // N=50.
  RandomStream rng(555);
  Tensor nuisance({4}, {1.0, -2.0, 0.5, 1.5});
  auto spread = [&rng, &nuisance](std::size_t segs) {
    const std::size_t utts = 2000;
    double total_var = 0.0;
    std::vector<Tensor> estimates;
    estimates.reserve(utts);
    for (std::size_t u = 0; u < utts; ++u) {
      std::vector<Tensor> z;
      for (std::size_t s = 0; s < segs; ++s) {
        Tensor zi = rng.normal_tensor({4});
        for (std::size_t k = 0; k < 4; ++k) zi[k] += nuisance[k];
        z.push_back(std::move(zi));
      }
      estimates.push_back(estimate_nuisance_by_mean(z));
    }
    for (std::size_t k = 0; k < 4; ++k) {
      double mean = 0.0;
      for (const Tensor& e : estimates) mean += e[k];
      mean /= static_cast<double>(utts);
      double var = 0.0;
      for (const Tensor& e : estimates) var += (e[k] - mean) * (e[k] - mean);
      total_var += var / static_cast<double>(utts);
    }
    return std::sqrt(total_var / 4.0);
  };
  const double short_sd = spread(2);
  const double long_sd = spread(50);
  const double ratio = short_sd / long_sd;
  verdict(ratio >= 3.0, "short-utterance-failure",
          fmt("sd(N=2)/sd(N=50) = %.2f (>=3); sd %.4f vs %.4f", ratio, short_sd,
              long_sd),
          seconds_since(t0), 30.0);
}

void criterion_transfer_fidelity(ReferenceRun& ref) {
  auto t0 = Clock::now();
  if (!ref.trained) {
    verdict(false, "transfer-fidelity", "reference model unavailable", 0.0, 120.0);
    return;
  }
  const SyntheticGroundTruth& gt = ref.synth.ground_truth;

  // MAP s-vectors for every utterance; domain B entries are the targets.
  std::vector<std::optional<UtteranceLatents>> latents(ref.synth.corpus.size());
  std::vector<std::size_t> domain_b;
  for (std::size_t i = 0; i < ref.synth.corpus.size(); ++i) {
    latents[i] = encode_utterance(ref.model, ref.synth.corpus.utterances[i]);
    if (latents[i] && gt.utts()[i].domain == 1) domain_b.push_back(i);
  }

  RandomStream pick(777);
  std::vector<SegmentTransferCase> replace_cases, recon_cases;
  for (std::size_t i = 0; i < ref.synth.corpus.size(); ++i) {
    if (!latents[i] || gt.utts()[i].domain != 0) continue;
    const UttGroundTruth& src = gt.utts()[i];
    const std::size_t target_idx = domain_b[pick.uniform_index(domain_b.size())];
    const UttGroundTruth& tgt = gt.utts()[target_idx];

    std::vector<Tensor> replaced =
        replace_nuisance(*latents[i], latents[target_idx]->s_vector);
    for (std::size_t s = 0; s < latents[i]->z1_means.size(); ++s) {
      auto [mu_replaced, var_r] =
          decode(ref.model, latents[i]->z1_means[s], replaced[s]);
      auto [mu_recon, var_c] =
          decode(ref.model, latents[i]->z1_means[s], latents[i]->z2_means[s]);
      Tensor target_render = gt.render_segment(src.classes[s], tgt.offset, tgt.tilt);
      Tensor source_render = gt.render_segment(src.classes[s], src.offset, src.tilt);
      replace_cases.push_back({mu_replaced, target_render, source_render});
      recon_cases.push_back({mu_recon, target_render, source_render});
    }
  }
  const double replaced_fid = transfer_fidelity(replace_cases);
  const double recon_fid = transfer_fidelity(recon_cases);
  const bool ok = replaced_fid >= 0.8 && recon_fid <= 0.55;
  verdict(ok, "transfer-fidelity",
          fmt("replace %.3f (>=0.8), reconstruct control %.3f (<=0.55), %g segments",
              replaced_fid, recon_fid, static_cast<double>(replace_cases.size())),
          seconds_since(t0), 120.0);
}

void criterion_exactness(ReferenceRun& ref) {
  auto t0 = Clock::now();
  bool ok = true;
  std::string detail;

  // Replace toward a target and back restores z2 bitwise.
  if (ref.trained) {
    auto lat_a = encode_utterance(ref.model, ref.synth.corpus.utterances[0]);
    auto lat_b = encode_utterance(ref.model, ref.synth.corpus.utterances[150]);
    if (lat_a && lat_b) {
      UtteranceLatents shifted = *lat_a;
      shifted.z2_means = replace_nuisance(*lat_a, lat_b->s_vector);
      shifted.s_vector = lat_b->s_vector;
      std::vector<Tensor> restored = replace_nuisance(shifted, lat_a->s_vector);
      for (std::size_t s = 0; s < restored.size(); ++s) {
        if (!tensors_equal(restored[s], lat_a->z2_means[s])) ok = false;
      }
      if (!ok) detail += "replace-reverse not bit-exact; ";
    } else {
      ok = false;
      detail += "latents unavailable; ";
    }

    // gamma = 0 perturbation is the identity transform.
    std::vector<Tensor> svecs;
    for (std::size_t i = 0; i < 40; ++i) {
      auto lat = encode_utterance(ref.model, ref.synth.corpus.utterances[i]);
      if (lat) svecs.push_back(lat->s_vector);
    }
    PerturbationBasis basis = pca_svectors(svecs);
    TransformOptions recon_opts;
    recon_opts.mode = TransformOptions::Mode::kReconstruct;
    TransformOptions zero_opts;
    zero_opts.mode = TransformOptions::Mode::kPerturb;
    zero_opts.basis = &basis;
    zero_opts.gamma = 0.0;
    RandomStream r1(1), r2(1);
    auto recon = transform_utterance(ref.model, ref.synth.corpus.utterances[3],
                                     recon_opts, r1);
    auto zeroed = transform_utterance(ref.model, ref.synth.corpus.utterances[3],
                                      zero_opts, r2);
    if (!recon || !zeroed || !tensors_equal(recon->frames, zeroed->frames)) {
      ok = false;
      detail += "gamma-0 transform differs from reconstruction; ";
    }
  } else {
    ok = false;
    detail += "reference model unavailable; ";
  }

  // Checkpoint and feature containers round-trip bitwise.
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "fhvae_acceptance";
  fs::create_directories(dir);
  {
    ModelConfig cfg;
    cfg.feat_dim = 5;
    cfg.seg_len = 4;
    cfg.dim_z1 = 3;
    cfg.dim_z2 = 3;
    cfg.hidden_dim = 7;
    RandomStream rng(888);
    Model m{cfg, ModelParams::init(cfg, rng)};
    const std::string p1 = (dir / "a.bin").string();
    const std::string p2 = (dir / "b.bin").string();
    save_model(m, p1);
    save_model(load_model(p1), p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)),
                   std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)),
                   std::istreambuf_iterator<char>());
    if (b1.empty() || b1 != b2) {
      ok = false;
      detail += "checkpoint round trip not bit-exact; ";
    }

    FeatureMatrix fm;
    fm.utt_id = "x";
    fm.frames = rng.normal_tensor({13, 5});
    const std::string fp = (dir / "x.fbin").string();
    save_features(fm, fp);
    if (!tensors_equal(load_features(fp), fm.frames)) {
      ok = false;
      detail += "feature round trip not bit-exact; ";
    }
  }

  // Fixed seeds reproduce training bitwise with the serial kernels.
  {
    kernels::set_parallel(false);
    SynthConfig sc;
    sc.n_utts = 16;
    sc.segs_min = 3;
    sc.segs_max = 5;
    sc.seed = 7;
    SynthResult small = synth_corpus(sc);
    ModelConfig mc;
    mc.feat_dim = sc.feat_dim;
    mc.seg_len = sc.seg_len;
    mc.dim_z1 = 3;
    mc.dim_z2 = 3;
    mc.hidden_dim = 12;
    TrainConfig tc;
    tc.epochs = 3;
    tc.utterance_batch = 8;
    tc.segment_batch = 8;
    tc.seed = 99;
    TrainResult a = train(small.corpus, mc, tc);
    TrainResult b = train(small.corpus, mc, tc);
    bool same = a.history.size() == b.history.size();
    for (std::size_t i = 0; same && i < a.history.size(); ++i) {
      same = std::memcmp(&a.history[i].loss_total, &b.history[i].loss_total,
                         sizeof(double)) == 0;
    }
    std::vector<const Tensor*> bt;
    b.model.params.for_each_const(
        [&bt](const std::string&, const Tensor& t) { bt.push_back(&t); });
    std::size_t idx = 0;
    a.model.params.for_each_const([&](const std::string&, const Tensor& t) {
      if (!tensors_equal(t, *bt[idx])) same = false;
      ++idx;
    });
    if (!same) {
      ok = false;
      detail += "fixed-seed training not bit-reproducible; ";
    }
    kernels::set_parallel(true);
  }

  if (detail.empty()) {
    detail = "replace-reverse, gamma-0 identity, container round trips, "
             "fixed-seed reruns all bit-exact";
  }
  verdict(ok, "exactness-suite", detail, seconds_since(t0), 120.0);
}

}  // namespace

int main() {
  std::printf("acceptance suite\n----------------\n");
  criterion_wer_scope();
  criterion_gradient_correctness();
  criterion_map_oracle();
  criterion_perturbation_norms();
  ReferenceRun ref;
  criterion_disentanglement(ref);
  criterion_short_utterance();
  criterion_transfer_fidelity(ref);
  criterion_exactness(ref);
  std::printf("----------------\n%s (%d failure%s)\n",
              g_failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES PRESENT",
              g_failures, g_failures == 1 ? "" : "s");
  return g_failures == 0 ? 0 : 1;
}
