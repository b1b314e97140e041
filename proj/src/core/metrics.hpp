#pragma once

#include <string_view>
#include <vector>

namespace mhng {

using LabelVector = std::vector<int>;

/// Pair-counting adjusted Rand index.
double adjusted_rand_index(const LabelVector& a, const LabelVector& b);

/// Cohen's kappa with per-rater marginals. Labels must match literally.
double cohen_kappa(const LabelVector& a, const LabelVector& b);

/// Landis-Koch agreement band for a kappa value.
std::string_view kappa_band(double kappa);

/// Maximum-weight assignment on a square matrix (Hungarian method).
/// Returns col_for_row.
std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& weight);

struct ConfusionMatrix {
  /// counts[truth][column], columns already permuted.
  std::vector<std::vector<long>> counts;
  /// permutation[j] = estimated sign shown in column j.
  std::vector<int> permutation;

  long total() const;
  long trace() const;
};

/// Confusion matrix with columns permuted to maximise the trace.
ConfusionMatrix confusion_sorted(const LabelVector& truth, const LabelVector& est, int k);

}  // namespace mhng
