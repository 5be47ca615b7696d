#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fhvae/tensor.hpp"

namespace fhvae {

// Fraction of segment-level variance explained by utterance identity:
// trace of the (count-weighted) between-utterance covariance of per-utterance
// means over the trace of the total covariance, both with population
// denominators. Always in [0, 1].
double variance_ratio(const std::vector<std::vector<Tensor>>& groups);

// Cross-validated accuracy of a multinomial linear probe trained with Adam.
// labels hold class ids in [0, C); folds are carved from a seeded shuffle.
double probe_accuracy(const std::vector<Tensor>& latents,
                      const std::vector<std::size_t>& labels, std::size_t folds,
                      std::uint64_t seed = 0);

// One transformed segment with its two reference renderings.
struct SegmentTransferCase {
  Tensor output;
  Tensor target_render;
  Tensor source_render;
};

// Fraction of segments whose output lies closer (L2) to the target-domain
// rendering than to the source rendering.
double transfer_fidelity(const std::vector<SegmentTransferCase>& cases);

struct DisentanglementReport {
  double variance_ratio_z1 = 0.0;
  double variance_ratio_z2 = 0.0;
  double probe_acc_z1 = 0.0;
  double probe_acc_z2 = 0.0;
  double transfer_fidelity = 0.0;
  bool has_latents = true;
  bool has_transfer = false;
};

// key=value lines, one metric per line; only computed sections appear.
void write_report(const DisentanglementReport& report, std::ostream& os);
std::string report_csv_header();
std::string report_csv_row(const DisentanglementReport& report);

}  // namespace fhvae
