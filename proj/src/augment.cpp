#include "fhvae/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fhvae/checkpoint.hpp"
#include "fhvae/log.hpp"
#include "fhvae/model_graph.hpp"

namespace fhvae {

namespace {

bool all_zero(const Tensor& t) {
  for (double v : t.data) {
    if (v != 0.0) return false;
  }
  return true;
}

void check_dim(const Tensor& t, std::size_t dim, const char* op) {
  if (t.numel() != dim) {
    throw ContractError(std::string(op) + ": vector length " +
                        std::to_string(t.numel()) + " does not match " +
                        std::to_string(dim));
  }
}

// Latent coordinates and shift vectors at this layer are snapped to a fixed
// absolute grid (2^-30, far below posterior noise). Sums of grid numbers in
// range are exact in doubles, so nuisance shifts compose and invert
// bit-exactly; a plain rounded addition loses the low bits about half the
// time.
constexpr double kLatentGrid = 1073741824.0;  // 2^30
constexpr double kGridRange = 8388608.0;      // 2^23: grid sums stay exact below this

double snap(double x) {
  if (!(std::abs(x) < kGridRange)) return x;
  return std::round(x * kLatentGrid) / kLatentGrid;
}

void snap_tensor(Tensor& t) {
  for (double& v : t.data) v = snap(v);
}

}  // namespace

Tensor estimate_svector_map(const std::vector<Tensor>& z2_means, double var_z2,
                            double var_mu2) {
  if (z2_means.empty()) {
    throw ContractError("estimate_svector_map: no segment posteriors");
  }
  if (!(var_z2 > 0.0) || !(var_mu2 > 0.0)) {
    throw ContractError("estimate_svector_map: variances must be positive");
  }
  const std::size_t d = z2_means.front().numel();
  Tensor sum({d});
  for (const Tensor& z : z2_means) {
    check_dim(z, d, "estimate_svector_map");
    for (std::size_t i = 0; i < d; ++i) sum[i] += z[i];
  }
  const double denom = static_cast<double>(z2_means.size()) + var_z2 / var_mu2;
  for (double& v : sum.data) v /= denom;
  snap_tensor(sum);
  return sum;
}

Tensor estimate_nuisance_by_mean(const std::vector<Tensor>& z_means) {
  if (z_means.empty()) {
    throw ContractError("estimate_nuisance_by_mean: no latent vectors");
  }
  const std::size_t d = z_means.front().numel();
  Tensor mean({d});
  for (const Tensor& z : z_means) {
    check_dim(z, d, "estimate_nuisance_by_mean");
    for (std::size_t i = 0; i < d; ++i) mean[i] += z[i];
  }
  for (double& v : mean.data) v /= static_cast<double>(z_means.size());
  return mean;
}

std::vector<Tensor> replace_nuisance(const UtteranceLatents& latents,
                                     const Tensor& target_svector) {
  check_dim(target_svector, latents.s_vector.numel(), "replace_nuisance");
  const std::size_t d = target_svector.numel();
  Tensor delta({d});
  for (std::size_t i = 0; i < d; ++i) {
    delta[i] = snap(target_svector[i] - latents.s_vector[i]);
  }
  std::vector<Tensor> out;
  out.reserve(latents.z2_means.size());
  const bool identity = all_zero(delta);
  for (const Tensor& z : latents.z2_means) {
    check_dim(z, d, "replace_nuisance");
    Tensor shifted = z;
    if (!identity) {
      for (std::size_t i = 0; i < d; ++i) shifted[i] += delta[i];
    }
    out.push_back(std::move(shifted));
  }
  return out;
}

// --- PCA -----------------------------------------------------------------------

void symmetric_eigen(const Tensor& matrix, Tensor& eigenvalues,
                     Tensor& eigenvectors_rows) {
  if (matrix.rank() != 2 || matrix.shape[0] != matrix.shape[1]) {
    throw ShapeError("symmetric_eigen: matrix " + shape_to_string(matrix.shape) +
                     " is not square");
  }
  const std::size_t n = matrix.shape[0];
  Tensor a = matrix;
  // v starts as identity; columns accumulate the rotations.
  Tensor v({n, n});
  for (std::size_t i = 0; i < n; ++i) v.at2(i, i) = 1.0;

  double fro = 0.0;
  for (double x : a.data) fro += x * x;
  const double tol = 1e-28 * std::max(fro, 1e-300);

  const int max_sweeps = 100;
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a.at2(p, q) * a.at2(p, q);
    }
    if (off <= tol) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a.at2(p, q);
        if (apq == 0.0) continue;
        const double tau = (a.at2(q, q) - a.at2(p, p)) / (2.0 * apq);
        const double sign = tau >= 0.0 ? 1.0 : -1.0;
        const double t = sign / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a.at2(k, p), akq = a.at2(k, q);
          a.at2(k, p) = c * akp - s * akq;
          a.at2(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a.at2(p, k), aqk = a.at2(q, k);
          a.at2(p, k) = c * apk - s * aqk;
          a.at2(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at2(k, p), vkq = v.at2(k, q);
          v.at2(k, p) = c * vkp - s * vkq;
          v.at2(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (sweep == max_sweeps) {
    throw NumericError("symmetric_eigen: Jacobi sweep did not converge");
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&a](std::size_t x, std::size_t y) {
    return a.at2(x, x) > a.at2(y, y);
  });

  eigenvalues = Tensor({n});
  eigenvectors_rows = Tensor({n, n});
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t col = order[r];
    eigenvalues[r] = a.at2(col, col);
    // Canonical sign: the largest-magnitude component is positive.
    std::size_t arg = 0;
    double best = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (std::abs(v.at2(k, col)) > best) {
        best = std::abs(v.at2(k, col));
        arg = k;
      }
    }
    const double flip = v.at2(arg, col) < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      eigenvectors_rows.at2(r, k) = flip * v.at2(k, col);
    }
  }
}

PerturbationBasis pca_svectors(const std::vector<Tensor>& svectors) {
  if (svectors.size() < 2) {
    throw ContractError("pca_svectors: need at least 2 s-vectors");
  }
  const std::size_t d = svectors.front().numel();
  const std::size_t m = svectors.size();
  Tensor mean({d});
  for (const Tensor& s : svectors) {
    check_dim(s, d, "pca_svectors");
    for (std::size_t i = 0; i < d; ++i) mean[i] += s[i];
  }
  for (double& v : mean.data) v /= static_cast<double>(m);

  Tensor cov({d, d});
  for (const Tensor& s : svectors) {
    for (std::size_t i = 0; i < d; ++i) {
      const double di = s[i] - mean[i];
      for (std::size_t j = 0; j < d; ++j) {
        cov.at2(i, j) += di * (s[j] - mean[j]);
      }
    }
  }
  for (double& v : cov.data) v /= static_cast<double>(m);

  Tensor eigvals, eigvecs;
  symmetric_eigen(cov, eigvals, eigvecs);

  PerturbationBasis basis;
  basis.mean = std::move(mean);
  basis.sigma = Tensor({d});
  for (std::size_t i = 0; i < d; ++i) {
    basis.sigma[i] = std::sqrt(std::max(0.0, eigvals[i]));
  }
  basis.eigvecs = std::move(eigvecs);
  basis.m_utterances = m;
  return basis;
}

PerturbScheme parse_scheme(const std::string& name) {
  if (name == "proposed") return PerturbScheme::kProposed;
  if (name == "rev-p") return PerturbScheme::kReversed;
  if (name == "uni-p") return PerturbScheme::kUniform;
  throw ContractError("unknown perturbation scheme '" + name +
                      "' (expected proposed, rev-p or uni-p)");
}

std::string scheme_name(PerturbScheme scheme) {
  switch (scheme) {
    case PerturbScheme::kProposed: return "proposed";
    case PerturbScheme::kReversed: return "rev-p";
    case PerturbScheme::kUniform: return "uni-p";
  }
  throw ContractError("unknown perturbation scheme");
}

Tensor sample_perturbation(const PerturbationBasis& basis, double gamma,
                           PerturbScheme scheme, RandomStream& rng) {
  if (!(gamma >= 0.0)) {
    throw ContractError("sample_perturbation: gamma must be non-negative");
  }
  const std::size_t d = basis.sigma.numel();
  if (basis.eigvecs.shape != Shape{d, d}) {
    throw ContractError("sample_perturbation: basis shapes are inconsistent");
  }
  double uniform_scale = 0.0;
  if (scheme == PerturbScheme::kUniform) {
    double total = 0.0;
    for (std::size_t i = 0; i < d; ++i) total += basis.sigma[i] * basis.sigma[i];
    uniform_scale = std::sqrt(total / static_cast<double>(d));
  }
  Tensor p({d});
  for (std::size_t dir = 0; dir < d; ++dir) {
    const double psi = rng.normal();
    double c;
    switch (scheme) {
      case PerturbScheme::kProposed: c = basis.sigma[dir]; break;
      case PerturbScheme::kReversed: c = basis.sigma[d - 1 - dir]; break;
      case PerturbScheme::kUniform: c = uniform_scale; break;
      default: throw ContractError("sample_perturbation: unknown scheme");
    }
    const double w = psi * c;
    for (std::size_t k = 0; k < d; ++k) {
      p[k] += w * basis.eigvecs.at2(dir, k);
    }
  }
  if (gamma == 0.0) return Tensor({d});  // exact zero vector
  for (double& v : p.data) v *= gamma;
  snap_tensor(p);
  return p;
}

std::vector<Tensor> perturb_utterance(const UtteranceLatents& latents,
                                      const Tensor& p) {
  const std::size_t d = p.numel();
  std::vector<Tensor> out;
  out.reserve(latents.z2_means.size());
  const bool identity = all_zero(p);
  for (const Tensor& z : latents.z2_means) {
    check_dim(z, d, "perturb_utterance");
    Tensor shifted = z;
    if (!identity) {
      for (std::size_t i = 0; i < d; ++i) shifted[i] += p[i];
    }
    out.push_back(std::move(shifted));
  }
  return out;
}

// --- model-dependent paths -------------------------------------------------------

namespace {

std::vector<Tensor> rows_to_vectors(const Tensor& rows) {
  std::vector<Tensor> out;
  const std::size_t n = rows.shape[0], d = rows.shape[1];
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor v({d});
    std::copy(rows.data.begin() + static_cast<std::ptrdiff_t>(i * d),
              rows.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * d),
              v.data.begin());
    out.push_back(std::move(v));
  }
  return out;
}

// Batched decode of per-segment latents; returns predicted means only,
// (N, seg_len*feat_dim).
Tensor decode_means(const Model& model, const std::vector<Tensor>& z1,
                    const std::vector<Tensor>& z2) {
  const ModelConfig& cfg = model.config;
  const std::size_t n = z1.size();
  Tensor z1_rows({n, cfg.dim_z1});
  Tensor z2_rows({n, cfg.dim_z2});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(z1[i].data.begin(), z1[i].data.end(),
              z1_rows.data.begin() + static_cast<std::ptrdiff_t>(i * cfg.dim_z1));
    std::copy(z2[i].data.begin(), z2[i].data.end(),
              z2_rows.data.begin() + static_cast<std::ptrdiff_t>(i * cfg.dim_z2));
  }
  Tape t;
  graph::Staged sp = graph::stage_params(t, model.params, false);
  graph::DecoderOut out =
      graph::decode(t, sp.vars, t.leaf(z1_rows), t.leaf(z2_rows), cfg);
  return t.value(out.mu);
}

}  // namespace

std::optional<UtteranceLatents> encode_utterance(const Model& model,
                                                 const FeatureMatrix& fm) {
  const ModelConfig& cfg = model.config;
  if (fm.num_frames() < cfg.seg_len) return std::nullopt;
  Tensor rows = segment_rows(fm.frames, cfg.seg_len, cfg.seg_len);
  BatchPosteriors post = encode_batch_means(model, rows);
  UtteranceLatents lat;
  lat.utt_id = fm.utt_id;
  lat.z1_means = rows_to_vectors(post.z1_mean);
  lat.z2_means = rows_to_vectors(post.z2_mean);
  for (Tensor& z : lat.z2_means) snap_tensor(z);
  lat.s_vector = estimate_svector_map(lat.z2_means, cfg.var_z2, cfg.var_mu2);
  return lat;
}

std::optional<FeatureMatrix> transform_utterance(const Model& model,
                                                 const FeatureMatrix& fm,
                                                 const TransformOptions& options,
                                                 RandomStream& rng) {
  const ModelConfig& cfg = model.config;
  std::optional<UtteranceLatents> lat = encode_utterance(model, fm);
  if (!lat) {
    log::warn("transform: utterance '" + fm.utt_id + "' has " +
              std::to_string(fm.num_frames()) + " frames, shorter than one segment; skipped");
    return std::nullopt;
  }

  std::vector<Tensor> z2_edited;
  switch (options.mode) {
    case TransformOptions::Mode::kReconstruct:
      z2_edited = lat->z2_means;
      break;
    case TransformOptions::Mode::kReplace:
      z2_edited = replace_nuisance(*lat, options.target_svector);
      break;
    case TransformOptions::Mode::kPerturb: {
      if (!options.basis) {
        throw ContractError("transform: perturb mode needs a basis");
      }
      Tensor p = sample_perturbation(*options.basis, options.gamma,
                                     options.scheme, rng);
      z2_edited = perturb_utterance(*lat, p);
      break;
    }
  }

  Tensor decoded = decode_means(model, lat->z1_means, z2_edited);
  const std::size_t n_segs = decoded.shape[0];
  const std::size_t covered = n_segs * cfg.seg_len;
  const std::size_t tail = fm.num_frames() - covered;
  const std::size_t out_frames = options.drop_tail ? covered : fm.num_frames();

  FeatureMatrix out;
  out.utt_id = fm.utt_id;
  out.domain_tag = fm.domain_tag;
  out.frames = Tensor({out_frames, cfg.feat_dim});
  std::copy(decoded.data.begin(), decoded.data.end(), out.frames.data.begin());
  if (!options.drop_tail && tail > 0) {
    std::copy(fm.frames.data.begin() + static_cast<std::ptrdiff_t>(covered * cfg.feat_dim),
              fm.frames.data.end(),
              out.frames.data.begin() + static_cast<std::ptrdiff_t>(covered * cfg.feat_dim));
  }
  return out;
}

// --- file formats ------------------------------------------------------------------

void save_svectors(const std::vector<std::pair<std::string, Tensor>>& svectors,
                   const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("save_svectors: cannot open " + path);
  char buf[40];
  for (const auto& [id, vec] : svectors) {
    os << id << '\t';
    for (std::size_t i = 0; i < vec.numel(); ++i) {
      if (i) os << ' ';
      std::snprintf(buf, sizeof(buf), "%.17g", vec[i]);
      os << buf;
    }
    os << "\n";
  }
  if (!os) throw IoError("save_svectors: short write to " + path);
}

std::vector<std::pair<std::string, Tensor>> load_svectors(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_svectors: cannot open " + path);
  std::vector<std::pair<std::string, Tensor>> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw IoError("load_svectors: malformed line in " + path);
    }
    std::string id = line.substr(0, tab);
    std::istringstream values(line.substr(tab + 1));
    std::vector<double> v;
    double x;
    while (values >> x) v.push_back(x);
    if (v.empty()) throw IoError("load_svectors: empty vector for '" + id + "'");
    const std::size_t dim = v.size();
    out.emplace_back(std::move(id), Tensor({dim}, std::move(v)));
  }
  return out;
}

void save_basis(const PerturbationBasis& basis, const ModelConfig& config,
                const std::string& path) {
  std::vector<NamedTensor> tensors;
  tensors.push_back({"pca.mean", basis.mean});
  tensors.push_back({"pca.sigma", basis.sigma});
  tensors.push_back({"pca.eigvecs", basis.eigvecs});
  tensors.push_back(
      {"pca.m_utterances", Tensor::scalar(static_cast<double>(basis.m_utterances))});
  write_container(path, config, tensors);
}

PerturbationBasis load_basis(const std::string& path) {
  Container c = read_container(path);
  PerturbationBasis basis;
  bool have_mean = false, have_sigma = false, have_vecs = false;
  for (NamedTensor& nt : c.tensors) {
    if (nt.name == "pca.mean") {
      basis.mean = std::move(nt.tensor);
      have_mean = true;
    } else if (nt.name == "pca.sigma") {
      basis.sigma = std::move(nt.tensor);
      have_sigma = true;
    } else if (nt.name == "pca.eigvecs") {
      basis.eigvecs = std::move(nt.tensor);
      have_vecs = true;
    } else if (nt.name == "pca.m_utterances") {
      basis.m_utterances = static_cast<std::size_t>(nt.tensor.item());
    }
  }
  if (!have_mean || !have_sigma || !have_vecs) {
    throw IoError("load_basis: " + path + " is missing pca tensors");
  }
  return basis;
}

}  // namespace fhvae
