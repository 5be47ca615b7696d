// End-to-end exercise of the command-line pipeline through a real shell:
// synth-corpus -> train -> extract -> pca -> transform/reconstruct -> eval,
// plus exit-code behavior. The binary path arrives via the FHVAE_CLI
// environment variable set by CTest.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

#define REQUIRE_MSG(cond, msg)                                            \
  do {                                                                    \
    if (!(cond)) {                                                        \
      std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << " " << msg \
                << "\n";                                                  \
      ++g_failures;                                                       \
    }                                                                     \
  } while (0)

std::string g_cli;
fs::path g_dir;

int run(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " >> " +
                          (g_dir / "cli.log").string() + " 2>&1";
  int status = std::system(cmd.c_str());
  if (status < 0) return -1;
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

bool files_identical(const fs::path& a, const fs::path& b) {
  const std::string ba = slurp(a), bb = slurp(b);
  return !ba.empty() && ba == bb;
}

}  // namespace

int main() {
  const char* cli = std::getenv("FHVAE_CLI");
  if (!cli) {
    std::cerr << "FHVAE_CLI not set\n";
    return 1;
  }
  g_cli = cli;
  g_dir = fs::temp_directory_path() / "fhvae_cli_test";
  fs::remove_all(g_dir);
  fs::create_directories(g_dir);
  const std::string dir = g_dir.string();

  // Unknown subcommands and flags are usage errors (exit 2).
  REQUIRE_MSG(run("frobnicate") == 2, "unknown subcommand should exit 2");
  REQUIRE_MSG(run("train --no-such-flag") == 2, "unknown flag should exit 2");

  // Missing inputs are runtime/validation failures (exit 1).
  REQUIRE_MSG(run("train --manifest " + dir + "/missing.tsv --out " + dir + "/x") == 1,
              "missing manifest should exit 1");

  REQUIRE_MSG(run("synth-corpus --out " + dir + "/data --n-utts 10 --segs-min 3 "
                  "--segs-max 5 --seed 7") == 0,
              "synth-corpus failed");
  REQUIRE_MSG(fs::exists(g_dir / "data/manifest.tsv"), "manifest missing");
  REQUIRE_MSG(fs::exists(g_dir / "data/ground_truth.tsv"), "ground truth missing");
  REQUIRE_MSG(fs::exists(g_dir / "data/config.txt"), "config dump missing");
  REQUIRE_MSG(slurp(g_dir / "data/config.txt").find("version") != std::string::npos,
              "config dump lacks a version string");

  // A config file provides defaults; flags override them.
  {
    std::ofstream cfg(g_dir / "train.cfg");
    cfg << "[model]\nhidden_dim = 8\ndim_z1 = 3\ndim_z2 = 3\n"
        << "[train]\nepochs = 99\nlearning_rate = 0.002\n";
  }
  REQUIRE_MSG(run("train --manifest " + dir + "/data/manifest.tsv --out " + dir +
                  "/run --config " + dir + "/train.cfg --epochs 2 --seed 3") == 0,
              "train failed");
  REQUIRE_MSG(fs::exists(g_dir / "run/model.bin"), "model checkpoint missing");
  REQUIRE_MSG(fs::exists(g_dir / "run/history.csv"), "history missing");
  {
    const std::string cfg_dump = slurp(g_dir / "run/config.txt");
    REQUIRE_MSG(cfg_dump.find("epochs = 2") != std::string::npos,
                "flag override not reflected in the config dump");
    REQUIRE_MSG(cfg_dump.find("hidden_dim = 8") != std::string::npos,
                "config-file value not reflected in the config dump");
    std::ifstream hist(g_dir / "run/history.csv");
    std::string header;
    std::getline(hist, header);
    REQUIRE_MSG(header ==
                    "epoch,split,loss_total,loss_recon,kl_z1,kl_z2,loss_disc,"
                    "learning_rate",
                "history header mismatch");
  }

  REQUIRE_MSG(run("extract --model " + dir + "/run/model.bin --manifest " + dir +
                  "/data/manifest.tsv --out " + dir + "/svec.tsv") == 0,
              "extract failed");
  REQUIRE_MSG(run("pca --model " + dir + "/run/model.bin --svectors " + dir +
                  "/svec.tsv --out " + dir + "/basis.bin") == 0,
              "pca failed");

  // transform with gamma 0 must equal reconstruct byte for byte.
  REQUIRE_MSG(run("transform --model " + dir + "/run/model.bin --manifest " + dir +
                  "/data/manifest.tsv --out " + dir + "/g0 --perturb --basis " +
                  dir + "/basis.bin --gamma 0 --seed 5") == 0,
              "gamma-0 transform failed");
  REQUIRE_MSG(run("reconstruct --model " + dir + "/run/model.bin --manifest " +
                  dir + "/data/manifest.tsv --out " + dir + "/recon --seed 5") == 0,
              "reconstruct failed");
  for (int u = 0; u < 10; ++u) {
    char name[32];
    std::snprintf(name, sizeof(name), "utt%05d.fbin", u);
    REQUIRE_MSG(files_identical(g_dir / "g0" / name, g_dir / "recon" / name),
                std::string("gamma-0 output differs from reconstruct for ") + name);
  }

  // Different perturbation scales complete and differ.
  REQUIRE_MSG(run("transform --model " + dir + "/run/model.bin --manifest " + dir +
                  "/data/manifest.tsv --out " + dir + "/g10 --perturb --basis " +
                  dir + "/basis.bin --gamma 1.0 --seed 5") == 0,
              "gamma 1.0 transform failed");
  REQUIRE_MSG(run("transform --model " + dir + "/run/model.bin --manifest " + dir +
                  "/data/manifest.tsv --out " + dir + "/g15 --perturb --basis " +
                  dir + "/basis.bin --gamma 1.5 --seed 5") == 0,
              "gamma 1.5 transform failed");
  bool any_differ = false;
  for (int u = 0; u < 10; ++u) {
    char name[32];
    std::snprintf(name, sizeof(name), "utt%05d.fbin", u);
    if (!files_identical(g_dir / "g10" / name, g_dir / "g15" / name)) {
      any_differ = true;
    }
  }
  REQUIRE_MSG(any_differ, "gamma 1.0 and 1.5 outputs should differ");

  // Replacement records its source-target pairing; the three schemes parse.
  REQUIRE_MSG(run("transform --model " + dir + "/run/model.bin --manifest " + dir +
                  "/data/manifest.tsv --out " + dir + "/repl --replace-from " +
                  dir + "/svec.tsv --seed 9") == 0,
              "replace transform failed");
  REQUIRE_MSG(fs::exists(g_dir / "repl/pairs.tsv"), "pairs file missing");
  REQUIRE_MSG(run("transform --model " + dir + "/run/model.bin --manifest " + dir +
                  "/data/manifest.tsv --out " + dir + "/revp --perturb --basis " +
                  dir + "/basis.bin --scheme rev-p --gamma 1.0 --seed 5") == 0,
              "rev-p transform failed");
  REQUIRE_MSG(run("transform --model " + dir + "/run/model.bin --manifest " + dir +
                  "/data/manifest.tsv --out " + dir + "/unip --perturb --basis " +
                  dir + "/basis.bin --scheme uni-p --gamma 1.0 --seed 5") == 0,
              "uni-p transform failed");
  REQUIRE_MSG(run("transform --model " + dir + "/run/model.bin --manifest " + dir +
                  "/data/manifest.tsv --out " + dir + "/bad --perturb --basis " +
                  dir + "/basis.bin --scheme nonsense") == 1,
              "unknown scheme should exit 1");

  // Latent diagnostics and transfer scoring run end to end.
  REQUIRE_MSG(run("eval --model " + dir + "/run/model.bin --manifest " + dir +
                  "/data/manifest.tsv --folds 3 --out " + dir + "/report") == 0,
              "eval failed");
  REQUIRE_MSG(slurp(g_dir / "report/report.txt").find("variance_ratio_z2=") !=
                  std::string::npos,
              "report.txt lacks metrics");
  REQUIRE_MSG(fs::exists(g_dir / "report/report.csv"), "report.csv missing");
  REQUIRE_MSG(run("eval --outputs " + dir + "/repl/manifest.tsv --ground-truth " +
                  dir + "/data/ground_truth.tsv --pairs " + dir +
                  "/repl/pairs.tsv") == 0,
              "transfer eval failed");

  // Fixed-seed reruns reproduce the run directory byte for byte.
  REQUIRE_MSG(run("--workers 1 train --manifest " + dir +
                  "/data/manifest.tsv --out " + dir + "/det1 --config " + dir +
                  "/train.cfg --epochs 2 --seed 3") == 0,
              "deterministic train 1 failed");
  REQUIRE_MSG(run("--workers 1 train --manifest " + dir +
                  "/data/manifest.tsv --out " + dir + "/det2 --config " + dir +
                  "/train.cfg --epochs 2 --seed 3") == 0,
              "deterministic train 2 failed");
  REQUIRE_MSG(files_identical(g_dir / "det1/model.bin", g_dir / "det2/model.bin"),
              "fixed-seed model checkpoints differ");
  REQUIRE_MSG(files_identical(g_dir / "det1/history.csv", g_dir / "det2/history.csv"),
              "fixed-seed histories differ");

  if (g_failures == 0) {
    std::cout << "cli pipeline OK\n";
    return 0;
  }
  std::cerr << g_failures << " cli check(s) failed; log: "
            << (g_dir / "cli.log").string() << "\n";
  return 1;
}
