#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "metrics.hpp"
#include "rng.hpp"
#include "support.hpp"

using namespace mhng;

namespace {

// Rand-index style pair counting over every unordered pair.
double pair_ari(const LabelVector& a, const LabelVector& b) {
  double both = 0, sa = 0, sb = 0, pairs = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool x = a[i] == a[j], y = b[i] == b[j];
      both += x && y;
      sa += x;
      sb += y;
      pairs += 1;
    }
  const double expected = sa * sb / pairs;
  const double top = 0.5 * (sa + sb);
  return top == expected ? 1.0 : (both - expected) / (top - expected);
}

}  // namespace

TEST_CASE("adjusted_rand_index") {
  const LabelVector x{0, 0, 1, 1};
  CHECK(adjusted_rand_index(x, x) == 1.0);
  CHECK(adjusted_rand_index(x, {1, 1, 0, 0}) == 1.0);
  // Pairs: (0,1) same/diff, (2,3) same/diff, (0,2) diff/same, (1,3) diff/same, (0,3),(1,2) diff/diff.
  // Agreements on "same": 0; expected = 2*2/6; max = 2 => ARI = (0 - 2/3) / (2 - 2/3) = -0.5.
  CHECK(pair_ari(x, {0, 1, 0, 1}) == doctest::Approx(-0.5));
  CHECK(adjusted_rand_index(x, {0, 1, 0, 1}) == doctest::Approx(-0.5).epsilon(1e-14));

  RngStream rng(1);
  for (int n = 0; n < 300; ++n) {
    const std::size_t len = 2 + rng.uniform_index(40);
    LabelVector a(len), b(len);
    for (std::size_t i = 0; i < len; ++i) {
      a[i] = static_cast<int>(rng.uniform_index(5));
      b[i] = static_cast<int>(rng.uniform_index(3));
    }
    CHECK(adjusted_rand_index(a, b) == doctest::Approx(pair_ari(a, b)).epsilon(1e-12));
  }
  CHECK_THROWS_CODE(adjusted_rand_index({0, 1}, {0}), ErrorCode::LengthMismatch);
}

TEST_CASE("cohen_kappa") {
  CHECK(cohen_kappa({0, 1, 0, 1}, {0, 1, 0, 1}) == 1.0);
  CHECK(cohen_kappa({0, 0, 1, 1}, {0, 1, 1, 1}) == doctest::Approx(0.5).epsilon(1e-14));
  // Literal labels: a relabelled copy is complete disagreement.
  CHECK(cohen_kappa({0, 0, 1, 1}, {1, 1, 0, 0}) == doctest::Approx(-1.0));

  RngStream rng(2);
  const std::size_t n = 100000;
  LabelVector a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = static_cast<int>(rng.uniform_index(10));
    b[i] = static_cast<int>(rng.uniform_index(10));
  }
  CHECK(std::abs(cohen_kappa(a, b)) < 0.02);

  CHECK_THROWS_CODE(cohen_kappa({0, 0, 0}, {0, 0, 0}), ErrorCode::DegenerateAgreement);
  CHECK_THROWS_CODE(cohen_kappa({0, 1}, {0, 1, 1}), ErrorCode::LengthMismatch);
}

TEST_CASE("kappa_band") {
  CHECK(kappa_band(0.91) == "almost perfect");
  CHECK(kappa_band(0.80) == "substantial");
  CHECK(kappa_band(0.8000001) == "almost perfect");
  CHECK(kappa_band(0.60) == "moderate");
  CHECK(kappa_band(0.40) == "fair");
  CHECK(kappa_band(0.20) == "slight");
  CHECK(kappa_band(0.0) == "no agreement");
  CHECK(kappa_band(-0.1) == "no agreement");
}

TEST_CASE("max_weight_assignment") {
  const std::vector<std::vector<double>> w{{1, 9, 2}, {8, 1, 3}, {2, 2, 7}};
  CHECK(max_weight_assignment(w) == std::vector<int>{1, 0, 2});

  RngStream rng(3);
  for (int n = 0; n < 50; ++n) {
    const int k = 2 + static_cast<int>(rng.uniform_index(5));
    std::vector<std::vector<double>> m(k, std::vector<double>(k));
    for (auto& row : m)
      for (double& v : row) v = rng.uniform();
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    double best = -1;
    do {
      double s = 0;
      for (int i = 0; i < k; ++i) s += m[i][perm[i]];
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto got = max_weight_assignment(m);
    double s = 0;
    for (int i = 0; i < k; ++i) s += m[i][got[i]];
    CHECK(s == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("confusion_sorted") {
  const LabelVector truth{0, 0, 1, 1, 2, 2, 2};
  auto diagonal = [](const ConfusionMatrix& c) {
    for (std::size_t i = 0; i < c.counts.size(); ++i)
      for (std::size_t j = 0; j < c.counts.size(); ++j)
        if (i != j && c.counts[i][j] != 0) return false;
    return true;
  };
  CHECK(diagonal(confusion_sorted(truth, truth, 3)));
  const LabelVector permuted{2, 2, 0, 0, 1, 1, 1};
  const auto c = confusion_sorted(truth, permuted, 3);
  CHECK(diagonal(c));
  CHECK(c.permutation == std::vector<int>{2, 0, 1});
  CHECK(c.trace() == 7);
  CHECK(c.total() == 7);

  RngStream rng(4);
  LabelVector t(60), e(60);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<int>(rng.uniform_index(4));
    e[i] = rng.uniform() < 0.5 ? t[i] : static_cast<int>(rng.uniform_index(4));
  }
  const auto best = confusion_sorted(t, e, 4);
  for (int n = 0; n < 1000; ++n) {
    std::vector<int> perm{0, 1, 2, 3};
    for (int i = 3; i > 0; --i) std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
    long tr = 0;
    for (std::size_t i = 0; i < t.size(); ++i) tr += perm[e[i]] == t[i];
    CHECK(best.trace() >= tr);
  }
  CHECK_THROWS_CODE(confusion_sorted({0}, {0, 1}, 2), ErrorCode::LengthMismatch);
}
