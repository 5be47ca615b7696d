#include "fhvae/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "fhvae/binary_io.hpp"
#include "fhvae/log.hpp"

namespace fs = std::filesystem;

namespace fhvae {

namespace {

constexpr char kFeatureMagic[4] = {'F', 'B', 'I', 'N'};
constexpr std::uint32_t kFeatureVersion = 1;
constexpr const char* kManifestHeader = "fhvae-manifest v1";
constexpr const char* kGroundTruthHeader = "fhvae-groundtruth v1";

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

std::size_t parse_size(const std::string& s, const std::string& context) {
  try {
    return static_cast<std::size_t>(std::stoull(s));
  } catch (const std::exception&) {
    throw IoError("manifest: bad integer '" + s + "' in " + context);
  }
}

}  // namespace

std::vector<Tensor> segment_utterance(const Tensor& frames, std::size_t seg_len,
                                      std::size_t hop) {
  if (seg_len < 1 || hop < 1) {
    throw ContractError("segment_utterance: seg_len and hop must be >= 1");
  }
  if (frames.rank() != 2) {
    throw ShapeError("segment_utterance: frames " + shape_to_string(frames.shape) +
                     " are not rank 2");
  }
  const std::size_t t = frames.shape[0], f = frames.shape[1];
  std::vector<Tensor> segments;
  for (std::size_t start = 0; start + seg_len <= t; start += hop) {
    Tensor seg({seg_len, f});
    std::copy(frames.data.begin() + static_cast<std::ptrdiff_t>(start * f),
              frames.data.begin() + static_cast<std::ptrdiff_t>((start + seg_len) * f),
              seg.data.begin());
    segments.push_back(std::move(seg));
  }
  return segments;
}

Tensor segment_rows(const Tensor& frames, std::size_t seg_len, std::size_t hop) {
  std::vector<Tensor> segs = segment_utterance(frames, seg_len, hop);
  const std::size_t f = frames.shape[1];
  Tensor rows({segs.size(), seg_len * f});
  for (std::size_t i = 0; i < segs.size(); ++i) {
    std::copy(segs[i].data.begin(), segs[i].data.end(),
              rows.data.begin() + static_cast<std::ptrdiff_t>(i * seg_len * f));
  }
  return rows;
}

void save_features(const FeatureMatrix& fm, const std::string& path) {
  if (fm.frames.rank() != 2) {
    throw ShapeError("save_features: frames " + shape_to_string(fm.frames.shape) +
                     " are not rank 2");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_features: cannot open " + path);
  os.write(kFeatureMagic, 4);
  io::put_u32(os, kFeatureVersion);
  io::put_u32(os, static_cast<std::uint32_t>(fm.frames.shape[0]));
  io::put_u32(os, static_cast<std::uint32_t>(fm.frames.shape[1]));
  io::put_f64_array(os, fm.frames.data.data(), fm.frames.numel());
  if (!os) throw IoError("save_features: short write to " + path);
}

Tensor load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_features: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kFeatureMagic, 4) != 0) {
    throw IoError("load_features: " + path + " is not a feature file");
  }
  std::uint32_t version = io::get_u32(is);
  if (version != kFeatureVersion) {
    throw IoError("load_features: unsupported version " + std::to_string(version) +
                  " in " + path);
  }
  std::uint32_t t = io::get_u32(is);
  std::uint32_t f = io::get_u32(is);
  Tensor frames({t, f});
  io::get_f64_array(is, frames.data.data(), frames.numel());
  return frames;
}

void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("save_manifest: cannot open " + path);
  os << kManifestHeader << "\n";
  for (const ManifestEntry& e : entries) {
    os << e.utt_id << '\t' << e.path << '\t' << e.num_frames << '\t' << e.feat_dim
       << '\t' << (e.domain_tag.empty() ? "-" : e.domain_tag) << "\n";
  }
  if (!os) throw IoError("save_manifest: short write to " + path);
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_manifest: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != kManifestHeader) {
    throw IoError("load_manifest: " + path + " missing '" +
                  std::string(kManifestHeader) + "' header");
  }
  std::vector<ManifestEntry> entries;
  std::unordered_set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_tabs(line);
    if (fields.size() != 5) {
      throw IoError("load_manifest: line " + std::to_string(lineno) + " has " +
                    std::to_string(fields.size()) + " fields, expected 5");
    }
    ManifestEntry e;
    e.utt_id = fields[0];
    e.path = fields[1];
    e.num_frames = parse_size(fields[2], "line " + std::to_string(lineno));
    e.feat_dim = parse_size(fields[3], "line " + std::to_string(lineno));
    e.domain_tag = fields[4] == "-" ? "" : fields[4];
    if (!seen.insert(e.utt_id).second) {
      throw ContractError("load_manifest: duplicate utterance id '" + e.utt_id + "'");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

Corpus load_corpus(const std::string& manifest_path) {
  std::vector<ManifestEntry> entries = load_manifest(manifest_path);
  fs::path base = fs::path(manifest_path).parent_path();
  Corpus corpus;
  for (const ManifestEntry& e : entries) {
    fs::path file = base / e.path;
    if (!fs::exists(file)) {
      throw IoError("load_corpus: missing feature file " + file.string() +
                    " for utterance '" + e.utt_id + "'");
    }
    FeatureMatrix fm;
    fm.utt_id = e.utt_id;
    fm.domain_tag = e.domain_tag;
    fm.frames = load_features(file.string());
    if (fm.frames.shape[0] != e.num_frames || fm.frames.shape[1] != e.feat_dim) {
      throw IoError("load_corpus: utterance '" + e.utt_id + "' has shape " +
                    shape_to_string(fm.frames.shape) + " but the manifest declares (" +
                    std::to_string(e.num_frames) + "," + std::to_string(e.feat_dim) + ")");
    }
    corpus.utterances.push_back(std::move(fm));
  }
  return corpus;
}

std::string save_corpus(const Corpus& corpus, const std::string& dir,
                        const std::string& manifest_name) {
  fs::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (const FeatureMatrix& fm : corpus.utterances) {
    std::string rel = fm.utt_id + ".fbin";
    save_features(fm, (fs::path(dir) / rel).string());
    ManifestEntry e;
    e.utt_id = fm.utt_id;
    e.path = rel;
    e.num_frames = fm.frames.shape[0];
    e.feat_dim = fm.frames.shape[1];
    e.domain_tag = fm.domain_tag;
    entries.push_back(std::move(e));
  }
  std::string manifest_path = (fs::path(dir) / manifest_name).string();
  save_manifest(entries, manifest_path);
  return manifest_path;
}

// ---------------------------------------------------------------------------

SynthConfig SynthConfig::standard_preset() { return SynthConfig{}; }

SynthConfig SynthConfig::production_shape() {
  SynthConfig c;
  c.feat_dim = 80;
  c.seg_len = 20;
  return c;
}

SyntheticGroundTruth::SyntheticGroundTruth(SynthConfig config,
                                           std::vector<UttGroundTruth> utts)
    : config_(std::move(config)), utts_(std::move(utts)) {
  build_prototypes();
}

const UttGroundTruth& SyntheticGroundTruth::utt(const std::string& utt_id) const {
  for (const UttGroundTruth& u : utts_) {
    if (u.utt_id == utt_id) return u;
  }
  throw ContractError("ground truth: unknown utterance '" + utt_id + "'");
}

namespace {

// Zero-sum ramp over feature bins, scaled to [-1, 1]; the spectral tilt
// direction of the rendering model.
double ramp(std::size_t j, std::size_t f) {
  if (f < 2) return 0.0;
  double centered = static_cast<double>(j) - 0.5 * static_cast<double>(f - 1);
  return centered / (0.5 * static_cast<double>(f - 1));
}

}  // namespace

void SyntheticGroundTruth::build_prototypes() {
  const std::size_t t_len = config_.seg_len, f_dim = config_.feat_dim;
  const std::size_t n = t_len * f_dim;
  prototypes_.clear();

  // Unit vectors spanning the nuisance subspace: constant offset and tilt.
  Tensor u_offset = Tensor::full({t_len, f_dim}, 1.0 / std::sqrt(static_cast<double>(n)));
  Tensor u_tilt({t_len, f_dim});
  double tilt_norm = 0.0;
  for (std::size_t ti = 0; ti < t_len; ++ti) {
    for (std::size_t j = 0; j < f_dim; ++j) {
      double r = ramp(j, f_dim);
      u_tilt.at2(ti, j) = r;
      tilt_norm += r * r;
    }
  }
  tilt_norm = std::sqrt(tilt_norm);
  if (tilt_norm > 0.0) {
    for (double& v : u_tilt.data) v /= tilt_norm;
  }

  for (std::size_t c = 0; c < config_.content_classes; ++c) {
    Tensor proto({t_len, f_dim});
    const double cd = static_cast<double>(c);
    for (std::size_t ti = 0; ti < t_len; ++ti) {
      for (std::size_t j = 0; j < f_dim; ++j) {
        double time_phase = 2.0 * std::numbers::pi * (cd + 1.0) *
                            (static_cast<double>(ti) + 0.5) / static_cast<double>(t_len);
        double freq_phase = 2.0 * std::numbers::pi *
                            (static_cast<double>(c % 4) + 1.0) *
                            (static_cast<double>(j) + 0.5) / static_cast<double>(f_dim);
        proto.at2(ti, j) = std::sin(time_phase + 0.7 * cd) +
                           std::cos(freq_phase + 0.4 * cd);
      }
    }
    // Remove any component along the nuisance directions so class identity
    // and nuisance stay decodable independently.
    double dot_off = 0.0, dot_tilt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dot_off += proto.data[i] * u_offset.data[i];
      dot_tilt += proto.data[i] * u_tilt.data[i];
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      proto.data[i] -= dot_off * u_offset.data[i] + dot_tilt * u_tilt.data[i];
      norm += proto.data[i] * proto.data[i];
    }
    double rms = std::sqrt(norm / static_cast<double>(n));
    if (rms > 0.0) {
      for (double& v : proto.data) v /= rms;
    }
    prototypes_.push_back(std::move(proto));
  }
}

Tensor SyntheticGroundTruth::render_segment(std::size_t content_class, double offset,
                                            double tilt) const {
  if (content_class >= prototypes_.size()) {
    throw ContractError("render_segment: class " + std::to_string(content_class) +
                        " out of range");
  }
  const std::size_t t_len = config_.seg_len, f_dim = config_.feat_dim;
  Tensor seg = prototypes_[content_class];
  for (std::size_t ti = 0; ti < t_len; ++ti) {
    for (std::size_t j = 0; j < f_dim; ++j) {
      seg.at2(ti, j) += offset + tilt * ramp(j, f_dim);
    }
  }
  return seg;
}

std::size_t SyntheticGroundTruth::nearest_prototype(const Tensor& segment) const {
  const std::size_t t_len = config_.seg_len, f_dim = config_.feat_dim;
  if (segment.shape != Shape{t_len, f_dim}) {
    throw ShapeError("nearest_prototype: segment " + shape_to_string(segment.shape) +
                     " does not match (" + std::to_string(t_len) + "," +
                     std::to_string(f_dim) + ")");
  }
  // Project out the nuisance subspace, then match.
  const std::size_t n = t_len * f_dim;
  double mean = 0.0;
  for (double v : segment.data) mean += v;
  mean /= static_cast<double>(n);
  double tilt_dot = 0.0, tilt_sq = 0.0;
  for (std::size_t ti = 0; ti < t_len; ++ti) {
    for (std::size_t j = 0; j < f_dim; ++j) {
      double r = ramp(j, f_dim);
      tilt_dot += segment.at2(ti, j) * r;
      tilt_sq += r * r;
    }
  }
  double tilt_coef = tilt_sq > 0.0 ? tilt_dot / tilt_sq : 0.0;

  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < prototypes_.size(); ++c) {
    double dist = 0.0;
    for (std::size_t ti = 0; ti < t_len; ++ti) {
      for (std::size_t j = 0; j < f_dim; ++j) {
        double centered = segment.at2(ti, j) - mean - tilt_coef * ramp(j, f_dim);
        double d = centered - prototypes_[c].at2(ti, j);
        dist += d * d;
      }
    }
    if (dist < best_dist) {
      best_dist = dist;
      best = c;
    }
  }
  return best;
}

void SyntheticGroundTruth::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("ground truth: cannot open " + path);
  os << kGroundTruthHeader << "\n";
  const SynthConfig& c = config_;
  os << c.n_utts << '\t' << c.segs_min << '\t' << c.segs_max << '\t'
     << c.content_classes << '\t' << c.feat_dim << '\t' << c.seg_len << '\t'
     << format_double(c.noise_std) << '\t' << format_double(c.domain_a.offset_mean)
     << '\t' << format_double(c.domain_a.offset_std) << '\t'
     << format_double(c.domain_a.tilt_mean) << '\t'
     << format_double(c.domain_a.tilt_std) << '\t'
     << format_double(c.domain_b.offset_mean) << '\t'
     << format_double(c.domain_b.offset_std) << '\t'
     << format_double(c.domain_b.tilt_mean) << '\t'
     << format_double(c.domain_b.tilt_std) << '\t' << c.seed << "\n";
  for (const UttGroundTruth& u : utts_) {
    os << u.utt_id << '\t' << u.domain << '\t' << format_double(u.offset) << '\t'
       << format_double(u.tilt) << '\t';
    for (std::size_t i = 0; i < u.classes.size(); ++i) {
      if (i) os << ' ';
      os << u.classes[i];
    }
    os << "\n";
  }
  if (!os) throw IoError("ground truth: short write to " + path);
}

SyntheticGroundTruth SyntheticGroundTruth::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("ground truth: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != kGroundTruthHeader) {
    throw IoError("ground truth: " + path + " missing header");
  }
  if (!std::getline(is, line)) throw IoError("ground truth: missing config line");
  std::istringstream cfg(line);
  SynthConfig c;
  cfg >> c.n_utts >> c.segs_min >> c.segs_max >> c.content_classes >> c.feat_dim >>
      c.seg_len >> c.noise_std >> c.domain_a.offset_mean >> c.domain_a.offset_std >>
      c.domain_a.tilt_mean >> c.domain_a.tilt_std >> c.domain_b.offset_mean >>
      c.domain_b.offset_std >> c.domain_b.tilt_mean >> c.domain_b.tilt_std >> c.seed;
  if (!cfg) throw IoError("ground truth: malformed config line");
  std::vector<UttGroundTruth> utts;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields = split_tabs(line);
    if (fields.size() != 5) throw IoError("ground truth: malformed record");
    UttGroundTruth u;
    u.utt_id = fields[0];
    u.domain = parse_size(fields[1], "ground truth");
    u.offset = std::stod(fields[2]);
    u.tilt = std::stod(fields[3]);
    std::istringstream cls(fields[4]);
    std::size_t k;
    while (cls >> k) u.classes.push_back(k);
    utts.push_back(std::move(u));
  }
  return SyntheticGroundTruth(std::move(c), std::move(utts));
}

SynthResult synth_corpus(const SynthConfig& config) {
  if (config.n_utts < 1) throw ContractError("synth_corpus: n_utts must be >= 1");
  if (config.content_classes < 2) {
    throw ContractError("synth_corpus: need at least 2 content classes");
  }
  if (config.segs_min < 1 || config.segs_min > config.segs_max) {
    throw ContractError("synth_corpus: bad segment count range");
  }
  RandomStream rng(config.seed);
  std::vector<UttGroundTruth> gt_utts;
  SyntheticGroundTruth renderer(config, {});

  Corpus corpus;
  for (std::size_t i = 0; i < config.n_utts; ++i) {
    UttGroundTruth u;
    char name[32];
    std::snprintf(name, sizeof(name), "utt%05zu", i);
    u.utt_id = name;
    u.domain = i < config.n_utts / 2 ? 0 : 1;
    const DomainParams& dp = u.domain == 0 ? config.domain_a : config.domain_b;
    u.offset = rng.normal(dp.offset_mean, dp.offset_std);
    u.tilt = rng.normal(dp.tilt_mean, dp.tilt_std);
    std::size_t n_segs =
        config.segs_min + rng.uniform_index(config.segs_max - config.segs_min + 1);

    FeatureMatrix fm;
    fm.utt_id = u.utt_id;
    fm.domain_tag = u.domain == 0 ? "domA" : "domB";
    fm.frames = Tensor({n_segs * config.seg_len, config.feat_dim});
    for (std::size_t s = 0; s < n_segs; ++s) {
      std::size_t cls = rng.uniform_index(config.content_classes);
      u.classes.push_back(cls);
      Tensor seg = renderer.render_segment(cls, u.offset, u.tilt);
      for (std::size_t ti = 0; ti < config.seg_len; ++ti) {
        for (std::size_t j = 0; j < config.feat_dim; ++j) {
          fm.frames.at2(s * config.seg_len + ti, j) =
              seg.at2(ti, j) + config.noise_std * rng.normal();
        }
      }
    }
    corpus.utterances.push_back(std::move(fm));
    gt_utts.push_back(std::move(u));
  }
  return SynthResult{std::move(corpus),
                     SyntheticGroundTruth(config, std::move(gt_utts))};
}

}  // namespace fhvae
