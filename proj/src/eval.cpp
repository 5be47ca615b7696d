#include "fhvae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "fhvae/rng.hpp"
#include "fhvae/training.hpp"

namespace fhvae {

double variance_ratio(const std::vector<std::vector<Tensor>>& groups) {
  if (groups.size() < 2) {
    throw ContractError("variance_ratio: need at least 2 utterances");
  }
  std::size_t dim = 0, total = 0;
  for (const auto& g : groups) {
    if (g.empty()) throw ContractError("variance_ratio: empty utterance group");
    for (const Tensor& x : g) {
      if (dim == 0) dim = x.numel();
      if (x.numel() != dim) {
        throw ContractError("variance_ratio: latent dimension mismatch");
      }
      ++total;
    }
  }

  Tensor grand({dim});
  for (const auto& g : groups) {
    for (const Tensor& x : g) {
      for (std::size_t k = 0; k < dim; ++k) grand[k] += x[k];
    }
  }
  for (double& v : grand.data) v /= static_cast<double>(total);

  double total_trace = 0.0, between_trace = 0.0;
  for (const auto& g : groups) {
    Tensor mean({dim});
    for (const Tensor& x : g) {
      for (std::size_t k = 0; k < dim; ++k) {
        mean[k] += x[k];
        const double d = x[k] - grand[k];
        total_trace += d * d;
      }
    }
    for (std::size_t k = 0; k < dim; ++k) {
      mean[k] /= static_cast<double>(g.size());
      const double d = mean[k] - grand[k];
      between_trace += static_cast<double>(g.size()) * d * d;
    }
  }
  if (!(total_trace > 0.0)) {
    throw ContractError("variance_ratio: zero total variance");
  }
  return (between_trace / static_cast<double>(total)) /
         (total_trace / static_cast<double>(total));
}

namespace {

std::size_t num_classes(const std::vector<std::size_t>& labels) {
  std::size_t c = 0;
  for (std::size_t l : labels) c = std::max(c, l + 1);
  return c;
}

// Full-batch multinomial logistic regression; returns accuracy on the
// held-out indices.
double fit_and_score(const std::vector<Tensor>& x,
                     const std::vector<std::size_t>& y,
                     const std::vector<std::size_t>& train_idx,
                     const std::vector<std::size_t>& test_idx,
                     std::size_t classes, const TrainConfig& opt_config) {
  const std::size_t dim = x.front().numel();
  Tensor w({dim + 1, classes});  // last row is the bias
  OptimizerState state;

  std::vector<double> logits(classes), probs(classes);
  Tensor grad({dim + 1, classes});
  const int iters = 300;
  for (int it = 0; it < iters; ++it) {
    std::fill(grad.data.begin(), grad.data.end(), 0.0);
    for (std::size_t idx : train_idx) {
      const Tensor& xi = x[idx];
      for (std::size_t c = 0; c < classes; ++c) {
        double z = w.at2(dim, c);
        for (std::size_t k = 0; k < dim; ++k) z += xi[k] * w.at2(k, c);
        logits[c] = z;
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double denom = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        probs[c] = std::exp(logits[c] - mx);
        denom += probs[c];
      }
      for (std::size_t c = 0; c < classes; ++c) {
        const double err = probs[c] / denom - (y[idx] == c ? 1.0 : 0.0);
        for (std::size_t k = 0; k < dim; ++k) grad.at2(k, c) += err * xi[k];
        grad.at2(dim, c) += err;
      }
    }
    for (double& g : grad.data) g /= static_cast<double>(train_idx.size());
    std::vector<ParamRef> refs{{"probe.w", &w, &grad}};
    adam_step(refs, state, 0.1, opt_config);
  }

  std::size_t hits = 0;
  for (std::size_t idx : test_idx) {
    const Tensor& xi = x[idx];
    std::size_t best = 0;
    double best_z = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      double z = w.at2(dim, c);
      for (std::size_t k = 0; k < dim; ++k) z += xi[k] * w.at2(k, c);
      if (z > best_z) {
        best_z = z;
        best = c;
      }
    }
    if (best == y[idx]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test_idx.size());
}

}  // namespace

double probe_accuracy(const std::vector<Tensor>& latents,
                      const std::vector<std::size_t>& labels, std::size_t folds,
                      std::uint64_t seed) {
  if (latents.size() != labels.size()) {
    throw ContractError("probe_accuracy: latents and labels differ in size");
  }
  if (folds < 2) throw ContractError("probe_accuracy: need at least 2 folds");
  if (latents.size() < folds * 2) {
    throw ContractError("probe_accuracy: need at least folds*2 examples");
  }
  const std::size_t classes = num_classes(labels);
  if (classes < 2) throw ContractError("probe_accuracy: need at least 2 classes");

  RandomStream rng(seed);
  std::vector<std::size_t> order = rng.permutation(latents.size());

  TrainConfig opt_config;  // probe reuses the Adam defaults

  double acc_sum = 0.0;
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < order.size(); ++i) {
      (i % folds == f ? test_idx : train_idx).push_back(order[i]);
    }
    acc_sum += fit_and_score(latents, labels, train_idx, test_idx, classes,
                             opt_config);
  }
  return acc_sum / static_cast<double>(folds);
}

double transfer_fidelity(const std::vector<SegmentTransferCase>& cases) {
  if (cases.empty()) {
    throw ContractError("transfer_fidelity: no ground-truth cases");
  }
  std::size_t closer = 0;
  for (const SegmentTransferCase& c : cases) {
    if (!c.output.same_shape(c.target_render) ||
        !c.output.same_shape(c.source_render)) {
      throw ContractError("transfer_fidelity: rendering shape mismatch");
    }
    double to_target = 0.0, to_source = 0.0;
    for (std::size_t i = 0; i < c.output.numel(); ++i) {
      const double dt = c.output[i] - c.target_render[i];
      const double ds = c.output[i] - c.source_render[i];
      to_target += dt * dt;
      to_source += ds * ds;
    }
    if (to_target < to_source) ++closer;
  }
  return static_cast<double>(closer) / static_cast<double>(cases.size());
}

void write_report(const DisentanglementReport& report, std::ostream& os) {
  char buf[40];
  auto line = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    os << key << "=" << buf << "\n";
  };
  if (report.has_latents) {
    line("variance_ratio_z1", report.variance_ratio_z1);
    line("variance_ratio_z2", report.variance_ratio_z2);
    line("probe_acc_z1", report.probe_acc_z1);
    line("probe_acc_z2", report.probe_acc_z2);
  }
  if (report.has_transfer) line("transfer_fidelity", report.transfer_fidelity);
}

std::string report_csv_header() {
  return "variance_ratio_z1,variance_ratio_z2,probe_acc_z1,probe_acc_z2,"
         "transfer_fidelity";
}

std::string report_csv_row(const DisentanglementReport& report) {
  std::ostringstream os;
  char buf[40];
  auto col = [&](double v, bool first) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    if (!first) os << ',';
    os << buf;
  };
  col(report.variance_ratio_z1, true);
  col(report.variance_ratio_z2, false);
  col(report.probe_acc_z1, false);
  col(report.probe_acc_z2, false);
  if (report.has_transfer) {
    col(report.transfer_fidelity, false);
  } else {
    os << ",";
  }
  return os.str();
}

}  // namespace fhvae
