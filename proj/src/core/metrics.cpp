#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "error.hpp"

namespace mhng {

namespace {

double choose2(double n) { return 0.5 * n * (n - 1.0); }

void check_pair(const LabelVector& a, const LabelVector& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  if (a.empty()) throw Error(ErrorCode::LengthMismatch, "empty label vector");
}

}  // namespace

double adjusted_rand_index(const LabelVector& a, const LabelVector& b) {
  check_pair(a, b);
  if (a.size() < 2) throw Error(ErrorCode::LengthMismatch, "ARI needs at least two items");
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [_, n] : joint) index += choose2(n);
  for (const auto& [_, n] : rows) sum_a += choose2(n);
  for (const auto& [_, n] : cols) sum_b += choose2(n);
  const double total = choose2(static_cast<double>(a.size()));
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions trivial and identical
  return (index - expected) / (max_index - expected);
}

double cohen_kappa(const LabelVector& a, const LabelVector& b) {
  check_pair(a, b);
  const auto n = static_cast<double>(a.size());
  std::map<int, double> pa, pb;
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    agree += a[i] == b[i] ? 1.0 : 0.0;
    pa[a[i]] += 1.0 / n;
    pb[b[i]] += 1.0 / n;
  }
  const double observed = agree / n;
  double chance = 0.0;
  for (const auto& [k, p] : pa) {
    const auto it = pb.find(k);
    if (it != pb.end()) chance += p * it->second;
  }
  if (std::abs(1.0 - chance) < 1e-15) throw Error(ErrorCode::DegenerateAgreement, "chance agreement is 1");
  return (observed - chance) / (1.0 - chance);
}

std::string_view kappa_band(double kappa) {
  if (kappa > 0.80) return "almost perfect";
  if (kappa > 0.60) return "substantial";
  if (kappa > 0.40) return "moderate";
  if (kappa > 0.20) return "fair";
  if (kappa > 0.0) return "slight";
  return "no agreement";
}

std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& weight) {
  // Shortest augmenting path Hungarian method on cost = -weight (1-indexed).
  const int n = static_cast<int>(weight.size());
  for (const auto& row : weight) {
    if (static_cast<int>(row.size()) != n) throw Error(ErrorCode::ShapeMismatch, "assignment matrix must be square");
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -weight[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_for_row(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (match[j] != 0) col_for_row[match[j] - 1] = j - 1;
  }
  return col_for_row;
}

long ConfusionMatrix::total() const {
  long t = 0;
  for (const auto& row : counts) {
    for (const long c : row) t += c;
  }
  return t;
}

long ConfusionMatrix::trace() const {
  long t = 0;
  for (std::size_t i = 0; i < counts.size() && i < permutation.size(); ++i) t += counts[i][i];
  return t;
}

ConfusionMatrix confusion_sorted(const LabelVector& truth, const LabelVector& est, int k) {
  check_pair(truth, est);
  if (k <= 0) throw Error(ErrorCode::IndexOutOfRange, "K must be positive");
  int classes = 0;
  for (std::size_t d = 0; d < truth.size(); ++d) {
    if (truth[d] < 0) throw Error(ErrorCode::IndexOutOfRange, "negative truth label");
    if (est[d] < 0 || est[d] >= k) throw Error(ErrorCode::IndexOutOfRange, "estimated sign outside [0, K)");
    classes = std::max(classes, truth[d] + 1);
  }
  std::vector<std::vector<long>> raw(static_cast<std::size_t>(classes), std::vector<long>(static_cast<std::size_t>(k), 0));
  for (std::size_t d = 0; d < truth.size(); ++d) ++raw[static_cast<std::size_t>(truth[d])][static_cast<std::size_t>(est[d])];

  const int n = std::max(classes, k);
  std::vector<std::vector<double>> weight(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  for (int r = 0; r < classes; ++r) {
    for (int c = 0; c < k; ++c) weight[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = static_cast<double>(raw[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
  }
  const auto col_for_row = max_weight_assignment(weight);

  // Column j shows the sign assigned to truth row j whenever classes <= K;
  // signs matched to padding rows follow.
  ConfusionMatrix cm;
  for (int r = 0; r < n; ++r) {
    const int c = col_for_row[static_cast<std::size_t>(r)];
    if (c < k) cm.permutation.push_back(c);
  }
  cm.counts.assign(static_cast<std::size_t>(classes), std::vector<long>(static_cast<std::size_t>(k), 0));
  for (int r = 0; r < classes; ++r) {
    for (int j = 0; j < k; ++j) cm.counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] = raw[static_cast<std::size_t>(r)][static_cast<std::size_t>(cm.permutation[static_cast<std::size_t>(j)])];
  }
  return cm;
}

}  // namespace mhng
