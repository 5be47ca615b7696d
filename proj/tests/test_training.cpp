#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fhvae/augment.hpp"
#include "fhvae/training.hpp"

using namespace fhvae;

TEST_CASE("train config invariants") {
  TrainConfig ok;
  ok.validate();
  TrainConfig bad = ok;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = ok;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = ok;
  bad.segment_batch = 0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("adam first step magnitude") {
  TrainConfig cfg;
  Tensor w({1}, {0.0});
  Tensor g({1}, {1.0});
  OptimizerState state;
  std::vector<ParamRef> refs{{"w", &w, &g}};
  adam_step(refs, state, 0.1, cfg);
  // m_hat = g, v_hat = g^2, so the update magnitude is lr * |g| / (|g| + eps).
  CHECK(std::abs(-w[0] - 0.1) <= 1e-8);
  CHECK(state.slots.at("w").step == 1);
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  TrainConfig cfg;
  Tensor w({3}, {1.0, -2.0, 0.5});
  Tensor w0 = w;
  Tensor g({3});
  OptimizerState state;
  std::vector<ParamRef> refs{{"w", &w, &g}};
  adam_step(refs, state, 0.1, cfg);
  CHECK(std::memcmp(w.data.data(), w0.data.data(), 3 * sizeof(double)) == 0);
  CHECK(state.slots.at("w").step == 1);
}

TEST_CASE("adam bias correction is exact at step one") {
  TrainConfig cfg;
  Tensor w({2}, {0.0, 0.0});
  Tensor g({2}, {2.0, -4.0});  // powers of two keep the algebra exact
  OptimizerState state;
  std::vector<ParamRef> refs{{"w", &w, &g}};
  adam_step(refs, state, 0.01, cfg);
  const AdamSlot& slot = state.slots.at("w");
  const double bc1 = 1.0 - cfg.beta1;
  CHECK(slot.m[0] / bc1 == 2.0);
  CHECK(slot.m[1] / bc1 == -4.0);
}

TEST_CASE("adam drives a quadratic toward zero") {
  TrainConfig cfg;
  Tensor w({2}, {5.0, -5.0});
  OptimizerState state;
  std::vector<double> norms;
  for (int step = 0; step < 100; ++step) {
    Tensor g({2}, {2.0 * w[0], 2.0 * w[1]});
    std::vector<ParamRef> refs{{"w", &w, &g}};
    adam_step(refs, state, 0.05, cfg);
    norms.push_back(std::sqrt(w[0] * w[0] + w[1] * w[1]));
  }
  for (std::size_t i = 10; i + 1 < 95; ++i) {
    CHECK(norms[i + 1] < norms[i]);
  }
  CHECK(norms.back() < norms.front() / 2.0);
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
  TrainConfig cfg;
  Tensor w({1}, {1.0});
  Tensor g({1}, {std::nan("")});
  Tensor w_ok({1}, {2.0});
  Tensor g_ok({1}, {0.5});
  OptimizerState state;
  std::vector<ParamRef> refs{{"good", &w_ok, &g_ok}, {"bad_param", &w, &g}};
  try {
    adam_step(refs, state, 0.1, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("bad_param") != std::string::npos);
  }
  // The step aborted before touching anything.
  CHECK(w_ok[0] == 2.0);
  CHECK(state.slots.empty());
}

TEST_CASE("gradient clipping") {
  Tensor a({2}, {3.0, 0.0});
  Tensor b({1}, {4.0});
  std::vector<Tensor*> grads{&a, &b};
  double norm = clip_gradients(grads, 2.5);
  CHECK(norm == doctest::Approx(5.0));
  double after = std::sqrt(a[0] * a[0] + a[1] * a[1] + b[0] * b[0]);
  CHECK(after == doctest::Approx(2.5));

  Tensor c({1}, {1.0});
  std::vector<Tensor*> small{&c};
  clip_gradients(small, 10.0);
  CHECK(c[0] == 1.0);  // untouched below the bound
}

TEST_CASE("learning rate halves once per plateau epoch") {
  LrController lr(0.4, true, 1);
  CHECK_FALSE(lr.on_validation(10.0));  // first value becomes the best
  CHECK(lr.rate() == 0.4);
  CHECK(lr.on_validation(10.0));  // plateau
  CHECK(lr.rate() == 0.2);
  CHECK(lr.on_validation(11.0));  // still no improvement
  CHECK(lr.rate() == 0.1);
  CHECK_FALSE(lr.on_validation(9.0));  // improvement resets the counter
  CHECK(lr.rate() == 0.1);

  LrController patient(1.0, true, 2);
  CHECK_FALSE(patient.on_validation(5.0));
  CHECK_FALSE(patient.on_validation(5.0));
  CHECK(patient.on_validation(5.0));
  CHECK(patient.rate() == 0.5);

  LrController off(1.0, false, 1);
  CHECK_FALSE(off.on_validation(1.0));
  CHECK_FALSE(off.on_validation(2.0));
  CHECK(off.rate() == 1.0);
}

namespace {

ModelConfig toy_model_config() {
  ModelConfig c;
  c.feat_dim = 4;
  c.seg_len = 5;
  c.dim_z1 = 3;
  c.dim_z2 = 3;
  c.hidden_dim = 8;
  return c;
}

Corpus toy_corpus(std::size_t n_utts, std::size_t frames, std::uint64_t seed) {
  RandomStream rng(seed);
  Corpus corpus;
  for (std::size_t i = 0; i < n_utts; ++i) {
    FeatureMatrix fm;
    fm.utt_id = "toy" + std::to_string(i);
    fm.frames = rng.normal_tensor({frames, 4});
    corpus.utterances.push_back(std::move(fm));
  }
  return corpus;
}

}  // namespace

TEST_CASE("segment_corpus excludes short utterances with a count") {
  ModelConfig cfg = toy_model_config();
  Corpus corpus = toy_corpus(3, 12, 1);
  corpus.utterances[1].frames = Tensor({3, 4});  // shorter than one segment
  TrainingCorpus tc = segment_corpus(corpus, cfg);
  CHECK(tc.utts.size() == 2);
  CHECK(tc.skipped_short == 1);
  CHECK(tc.utts[0].n_segments() == 2);
  CHECK(tc.total_segments() == 4);
}

TEST_CASE("init table matches the MAP estimator") {
  ModelConfig cfg = toy_model_config();
  RandomStream prng(3);
  Model model{cfg, ModelParams::init(cfg, prng)};
  Corpus corpus = toy_corpus(2, 15, 4);
  TrainingCorpus tc = segment_corpus(corpus, cfg);
  std::vector<const SegmentedUtterance*> utts{&tc.utts[0], &tc.utts[1]};
  SVectorTable table = init_svector_table(utts, model);
  REQUIRE(table.size() == 2);

  BatchPosteriors post = encode_batch_means(model, tc.utts[0].rows);
  std::vector<Tensor> z2;
  for (std::size_t i = 0; i < post.z2_mean.shape[0]; ++i) {
    Tensor v({cfg.dim_z2});
    for (std::size_t d = 0; d < cfg.dim_z2; ++d) v[d] = post.z2_mean.at2(i, d);
    z2.push_back(std::move(v));
  }
  Tensor expect = estimate_svector_map(z2, cfg.var_z2, cfg.var_mu2);
  const Tensor& got = table.at("toy0");
  for (std::size_t d = 0; d < cfg.dim_z2; ++d) {
    CHECK(got[d] == doctest::Approx(expect[d]).epsilon(1e-12));
  }

  SegmentedUtterance hollow;
  hollow.utt_id = "empty";
  hollow.rows = Tensor({0, cfg.seg_len * cfg.feat_dim});
  std::vector<const SegmentedUtterance*> with_hollow{&tc.utts[0], &hollow};
  SVectorTable skipping = init_svector_table(with_hollow, model);
  CHECK(skipping.size() == 1);
  CHECK_FALSE(skipping.contains("empty"));
}

TEST_CASE("hierarchical sampling") {
  ModelConfig cfg = toy_model_config();
  RandomStream prng(5);
  Model model{cfg, ModelParams::init(cfg, prng)};
  Corpus corpus = toy_corpus(6, 10, 6);
  TrainingCorpus tc = segment_corpus(corpus, cfg);

  SUBCASE("k equal to the corpus is a permutation") {
    RandomStream rng(1);
    HierarchicalSample hs = hierarchical_sample(tc, 6, model, rng);
    CHECK(hs.utt_indices.size() == 6);
    std::vector<char> seen(6, 0);
    for (std::size_t i : hs.utt_indices) seen[i] = 1;
    for (char c : seen) CHECK(c == 1);
    CHECK(hs.table.size() == 6);
  }

  SUBCASE("k larger than the corpus clamps") {
    RandomStream rng(2);
    HierarchicalSample hs = hierarchical_sample(tc, 99, model, rng);
    CHECK(hs.utt_indices.size() == 6);
  }

  SUBCASE("fixed seeds reproduce the subset") {
    RandomStream r1(7), r2(7);
    HierarchicalSample a = hierarchical_sample(tc, 3, model, r1);
    HierarchicalSample b = hierarchical_sample(tc, 3, model, r2);
    CHECK(a.utt_indices == b.utt_indices);
  }

  SUBCASE("empty corpus is a contract error") {
    TrainingCorpus empty;
    RandomStream rng(1);
    CHECK_THROWS_AS(hierarchical_sample(empty, 2, model, rng), ContractError);
  }
}

TEST_CASE("hierarchical sampling is uniform") {
  // Chi-squared test over inclusion counts. For sampling K of n without
  // replacement, Var(count per draw) = K(n-K)/(n(n-1)) once the sum
  // constraint is accounted for, so S = sum (c_i - E)^2 * n(n-1)/(R K (n-K))
  // is approximately chi-squared with n-1 degrees of freedom.
  ModelConfig cfg = toy_model_config();
  cfg.hidden_dim = 2;  // keep the table init cheap
  RandomStream prng(8);
  Model model{cfg, ModelParams::init(cfg, prng)};
  Corpus corpus = toy_corpus(20, 5, 9);
  TrainingCorpus tc = segment_corpus(corpus, cfg);

  const std::size_t n = 20, k = 5, rounds = 10000;
  std::vector<double> counts(n, 0.0);
  RandomStream rng(123);
  for (std::size_t r = 0; r < rounds; ++r) {
    std::vector<std::size_t> perm = rng.permutation(n);
    for (std::size_t i = 0; i < k; ++i) counts[perm[i]] += 1.0;
  }
  const double expect = static_cast<double>(rounds * k) / n;
  double sq = 0.0;
  for (double c : counts) sq += (c - expect) * (c - expect);
  const double stat = sq * static_cast<double>(n * (n - 1)) /
                      (static_cast<double>(rounds) * k * (n - k));
  // 0.999 quantile of chi-squared with 19 degrees of freedom.
  CHECK(stat < 43.82);

  // The sampler itself uses the same permutation primitive; spot check that
  // one draw honors it.
  RandomStream r2(123);
  HierarchicalSample hs = hierarchical_sample(tc, k, model, r2);
  std::vector<std::size_t> perm = RandomStream(123).permutation(n);
  for (std::size_t i = 0; i < k; ++i) CHECK(hs.utt_indices[i] == perm[i]);
}

TEST_CASE("one epoch smoke run") {
  ModelConfig mc = toy_model_config();
  TrainConfig tc;
  tc.epochs = 1;
  tc.utterance_batch = 2;
  tc.segment_batch = 4;
  tc.seed = 11;
  Corpus corpus = toy_corpus(2, 15, 12);
  TrainResult r = train(corpus, mc, tc);
  CHECK_FALSE(r.aborted);
  REQUIRE(r.history.size() == 1);
  CHECK(std::isfinite(r.history[0].loss_total));
  CHECK(r.model.params.all_finite());
}

TEST_CASE("training loss improves on the synthetic corpus") {
  SynthConfig sc;
  sc.n_utts = 40;
  sc.segs_min = 3;
  sc.segs_max = 6;
  sc.seed = 13;
  SynthResult synth = synth_corpus(sc);

  ModelConfig mc;
  mc.feat_dim = sc.feat_dim;
  mc.seg_len = sc.seg_len;
  mc.dim_z1 = 4;
  mc.dim_z2 = 4;
  mc.hidden_dim = 16;
  TrainConfig tc;
  tc.epochs = 6;
  tc.utterance_batch = 20;
  tc.segment_batch = 16;
  tc.learning_rate = 3e-3;
  tc.seed = 14;
  TrainResult r = train(synth.corpus, mc, tc);
  CHECK_FALSE(r.aborted);
  REQUIRE(r.history.size() == 6);
  CHECK(r.history.back().loss_total < r.history.front().loss_total);
  // The mean lower bound itself (total = -(lb + alpha*disc), with the CSV
  // storing loss_disc = -disc) must have risen as well.
  auto bound = [&mc](const HistoryRow& h) {
    return -h.loss_total + mc.alpha * h.loss_disc;
  };
  CHECK(bound(r.history.back()) > bound(r.history.front()));
}

TEST_CASE("fixed seeds give bit-identical histories and parameters") {
  ModelConfig mc = toy_model_config();
  TrainConfig tc;
  tc.epochs = 2;
  tc.utterance_batch = 3;
  tc.segment_batch = 4;
  tc.seed = 21;
  Corpus corpus = toy_corpus(4, 12, 22);

  TrainResult a = train(corpus, mc, tc);
  TrainResult b = train(corpus, mc, tc);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(std::memcmp(&a.history[i].loss_total, &b.history[i].loss_total,
                      sizeof(double)) == 0);
    CHECK(std::memcmp(&a.history[i].loss_recon, &b.history[i].loss_recon,
                      sizeof(double)) == 0);
  }
  bool params_equal = true;
  std::vector<const Tensor*> bt;
  b.model.params.for_each_const([&](const std::string&, const Tensor& t) {
    bt.push_back(&t);
  });
  std::size_t i = 0;
  a.model.params.for_each_const([&](const std::string&, const Tensor& t) {
    if (std::memcmp(t.data.data(), bt[i]->data.data(),
                    t.numel() * sizeof(double)) != 0) {
      params_equal = false;
    }
    ++i;
  });
  CHECK(params_equal);
}

TEST_CASE("table entries move under training gradients") {
  ModelConfig cfg = toy_model_config();
  RandomStream prng(30);
  Model model{cfg, ModelParams::init(cfg, prng)};
  Corpus corpus = toy_corpus(3, 15, 31);
  TrainingCorpus tc = segment_corpus(corpus, cfg);
  RandomStream rng(32);
  HierarchicalSample hs = hierarchical_sample(tc, 3, model, rng);

  SegmentBatch batch;
  const SegmentedUtterance& u = tc.utts[hs.utt_indices[0]];
  batch.x = Tensor({1, cfg.seg_len * cfg.feat_dim});
  std::copy(u.rows.data.begin(),
            u.rows.data.begin() + static_cast<std::ptrdiff_t>(batch.x.numel()),
            batch.x.data.begin());
  batch.utt_ids = {u.utt_id};
  batch.inv_n_utt = {1.0 / static_cast<double>(u.n_segments())};

  SVectorTable before = hs.table;
  LossGradients lg = total_loss_gradients(model, batch, hs.table, rng);

  TrainConfig tcfg;
  OptimizerState opt;
  std::vector<ParamRef> refs;
  for (std::size_t row = 0; row < hs.table.size(); ++row) {
    refs.push_back(ParamRef{"svec/" + hs.table.ids()[row], &hs.table.row(row),
                            &lg.table_grads[row]});
  }
  adam_step(refs, opt, 0.01, tcfg);

  // The batch utterance's entry must move; through the discriminative
  // denominator every active entry receives gradient as well.
  const std::size_t own = before.row_of(u.utt_id);
  bool moved = false;
  for (std::size_t d = 0; d < cfg.dim_z2; ++d) {
    if (hs.table.row(own)[d] != before.row(own)[d]) moved = true;
  }
  CHECK(moved);
}

TEST_CASE("lr halving holds out validation utterances") {
  ModelConfig mc = toy_model_config();
  TrainConfig tc;
  tc.epochs = 3;
  tc.utterance_batch = 4;
  tc.segment_batch = 4;
  tc.seed = 33;
  tc.lr_halving = true;
  Corpus corpus = toy_corpus(12, 15, 34);
  TrainResult r = train(corpus, mc, tc);
  CHECK_FALSE(r.aborted);
  REQUIRE(r.history.size() == 6);  // train + val rows per epoch
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(r.history[2 * e].split == "train");
    CHECK(r.history[2 * e + 1].split == "val");
    CHECK(std::isfinite(r.history[2 * e + 1].loss_total));
    CHECK(r.history[2 * e + 1].loss_disc == 0.0);  // non-discriminative bound
  }
}

TEST_CASE("training aborts on divergence and restores the checkpoint") {
  ModelConfig mc = toy_model_config();
  TrainConfig tc;
  tc.epochs = 4;
  tc.utterance_batch = 2;
  tc.segment_batch = 4;
  tc.learning_rate = 1e8;  // guaranteed blow-up
  tc.clip_norm = 0.0;      // disable clipping so the step diverges
  tc.seed = 41;
  Corpus corpus = toy_corpus(2, 15, 42);
  TrainResult r = train(corpus, mc, tc);
  CHECK(r.aborted);
  CHECK_FALSE(r.abort_reason.empty());
  CHECK(r.model.params.all_finite());
}

TEST_CASE("history CSV layout") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "fhvae_test_csv";
  fs::create_directories(dir);
  std::vector<HistoryRow> rows(2);
  rows[0] = {0, "train", 1.5, 1.0, 0.25, 0.125, 0.0625, 1e-3};
  rows[1] = {0, "val", 1.25, 0.875, 0.25, 0.125, 0.0, 1e-3};
  std::string path = (dir / "history.csv").string();
  write_history_csv(rows, path);
  std::ifstream is(path);
  std::string header, l0, l1;
  std::getline(is, header);
  std::getline(is, l0);
  std::getline(is, l1);
  CHECK(header == "epoch,split,loss_total,loss_recon,kl_z1,kl_z2,loss_disc,learning_rate");
  CHECK(l0.rfind("0,train,1.5,1,0.25,0.125,0.0625,", 0) == 0);
  CHECK(l1.rfind("0,val,1.25,0.875,0.25,0.125,0,", 0) == 0);
}
