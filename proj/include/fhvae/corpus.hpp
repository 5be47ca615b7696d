#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fhvae/rng.hpp"
#include "fhvae/tensor.hpp"

namespace fhvae {

// One utterance of observed frames.
struct FeatureMatrix {
  std::string utt_id;
  Tensor frames;  // (T, F)
  std::string domain_tag;

  std::size_t num_frames() const { return frames.rank() == 2 ? frames.shape[0] : 0; }
  std::size_t feat_dim() const { return frames.rank() == 2 ? frames.shape[1] : 0; }
};

struct Corpus {
  std::vector<FeatureMatrix> utterances;

  std::size_t size() const { return utterances.size(); }
  bool empty() const { return utterances.empty(); }
};

struct ManifestEntry {
  std::string utt_id;
  std::string path;  // relative to the manifest file
  std::size_t num_frames = 0;
  std::size_t feat_dim = 0;
  std::string domain_tag;
};

// Fixed-length windows starting at 0, hop, 2*hop, ...; only full windows are
// returned, so fewer than seg_len frames gives an empty list.
std::vector<Tensor> segment_utterance(const Tensor& frames, std::size_t seg_len,
                                      std::size_t hop);

// Same windows flattened to rows of length seg_len*F, as consumed by the
// model's batched paths.
Tensor segment_rows(const Tensor& frames, std::size_t seg_len, std::size_t hop);

// Feature container: magic "FBIN", version u32, T u32, F u32, then row-major
// little-endian 64-bit floats.
void save_features(const FeatureMatrix& fm, const std::string& path);
Tensor load_features(const std::string& path);

// Manifest: UTF-8 text, header "fhvae-manifest v1", then TAB-separated
// records utt_id, path, T, F, domain_tag ("-" when absent).
void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);
std::vector<ManifestEntry> load_manifest(const std::string& path);

// Loads every feature file named by the manifest, verifying shapes against
// the declared T and F.
Corpus load_corpus(const std::string& manifest_path);

// Writes one .fbin per utterance plus a manifest into dir; returns the
// manifest path.
std::string save_corpus(const Corpus& corpus, const std::string& dir,
                        const std::string& manifest_name = "manifest.tsv");

// ---------------------------------------------------------------------------
// Synthetic two-domain corpus with known generating factors.

struct DomainParams {
  double offset_mean = 0.0;
  double offset_std = 0.25;
  double tilt_mean = 0.0;
  double tilt_std = 0.2;
};

struct SynthConfig {
  std::size_t n_utts = 200;
  std::size_t segs_min = 4;
  std::size_t segs_max = 12;
  std::size_t content_classes = 8;
  std::size_t feat_dim = 8;
  std::size_t seg_len = 10;
  double noise_std = 0.05;
  DomainParams domain_a{-0.8, 0.25, -0.6, 0.2};
  DomainParams domain_b{0.8, 0.25, 0.6, 0.2};
  std::uint64_t seed = 0;

  // 200 utterances x 4-12 segments, 2 domains, 8 content classes.
  static SynthConfig standard_preset();
  // Production feature geometry (80-dim frames, 20-frame segments).
  static SynthConfig production_shape();
};

struct UttGroundTruth {
  std::string utt_id;
  std::size_t domain = 0;
  double offset = 0.0;  // constant within the utterance
  double tilt = 0.0;    // constant within the utterance
  std::vector<std::size_t> classes;  // one content class per segment
};

class SyntheticGroundTruth {
 public:
  SyntheticGroundTruth() = default;
  SyntheticGroundTruth(SynthConfig config, std::vector<UttGroundTruth> utts);

  const SynthConfig& config() const { return config_; }
  const std::vector<UttGroundTruth>& utts() const { return utts_; }
  const UttGroundTruth& utt(const std::string& utt_id) const;

  // Noise-free rendering of one segment.
  Tensor render_segment(std::size_t content_class, double offset, double tilt) const;
  // Recovers the content class of a rendering by projecting out the nuisance
  // directions and matching the nearest prototype.
  std::size_t nearest_prototype(const Tensor& segment) const;

  void save(const std::string& path) const;
  static SyntheticGroundTruth load(const std::string& path);

 private:
  void build_prototypes();

  SynthConfig config_;
  std::vector<UttGroundTruth> utts_;
  std::vector<Tensor> prototypes_;  // zero-mean, tilt-orthogonal, unit RMS
};

struct SynthResult {
  Corpus corpus;
  SyntheticGroundTruth ground_truth;
};

SynthResult synth_corpus(const SynthConfig& config);

}  // namespace fhvae
