#include <Eigen/LU>

#include <cmath>
#include <numbers>
#include <vector>

#include "gmm.hpp"
#include "support.hpp"

using namespace mhng;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (const double x : v) out(i++) = x;
  return out;
}

Matrix spd(Eigen::Index l, RngStream& rng) {
  Matrix a(l, l);
  for (Eigen::Index i = 0; i < l; ++i)
    for (Eigen::Index j = 0; j < l; ++j) a(i, j) = rng.normal();
  return a * a.transpose() + 0.5 * Matrix::Identity(l, l);
}

double dense_logpdf(const Vector& x, const Vector& mu, const Matrix& lambda) {
  const Vector d = x - mu;
  return 0.5 * std::log(lambda.determinant()) - 0.5 * d.dot(lambda * d) -
         0.5 * static_cast<double>(x.size()) * std::log(2 * std::numbers::pi);
}

// Multivariate Student-t log density with location m, scale matrix s and dof v.
double student_t_logpdf(const Vector& x, const Vector& m, const Matrix& s, double v) {
  const double p = static_cast<double>(x.size());
  const Vector d = x - m;
  return std::lgamma((v + p) / 2) - std::lgamma(v / 2) - 0.5 * p * std::log(v * std::numbers::pi) -
         0.5 * std::log(s.determinant()) - 0.5 * (v + p) * std::log1p(d.dot(s.inverse() * d) / v);
}

// Posterior predictive of one point under the normal-Wishart prior with E[Lambda] = nu * beta.
double predictive(const NWHyper& h, const Vector& x) {
  const double p = static_cast<double>(h.dim());
  const double v = h.nu - p + 1;
  const Matrix scale = (h.alpha + 1) / (h.alpha * v) * h.beta.data().inverse();
  return student_t_logpdf(x, h.m, scale, v);
}

std::vector<double> normalised(std::vector<double> v) {
  double mx = v[0];
  for (const double x : v) mx = std::max(mx, x);
  double s = 0;
  for (double& x : v) s += (x = std::exp(x - mx));
  for (double& x : v) x /= s;
  return v;
}

}  // namespace

TEST_CASE("nw_posterior") {
  const NWHyper h = NWHyper::isotropic(2, 1.0, 12.0, 0.05);
  const NWHyper same = nw_posterior(h, {});
  CHECK(same.m == h.m);
  CHECK(same.alpha == h.alpha);
  CHECK(same.nu == h.nu);
  CHECK(same.beta == h.beta);

  const Vector x = vec({2.0, -4.0});
  const NWHyper one = nw_posterior(h, {x});
  CHECK((one.m - x / 2).norm() < 1e-12);
  CHECK(one.alpha == 2.0);
  CHECK(one.nu == 13.0);
  // Scale update with the inverse-scale form: beta'^-1 = beta^-1 + alpha n/(alpha+n) (x-m)(x-m)^T.
  const Matrix want = (h.beta.data().inverse() + 0.5 * x * x.transpose()).inverse();
  CHECK((one.beta.data() - want).cwiseAbs().maxCoeff() < 1e-10);

  RngStream rng(8);
  const Vector mu0 = vec({1.5, -0.5});
  std::vector<Vector> cloud;
  for (int i = 0; i < 50; ++i) cloud.push_back(mu0 + vec({rng.normal(), rng.normal()}));
  const NWHyper post = nw_posterior(h, cloud);
  CHECK((post.m - mu0).norm() < 3.0 / std::sqrt(50.0));

  CHECK_THROWS_CODE(nw_posterior(h, {vec({1, 2, 3})}), ErrorCode::DimensionMismatch);
}

TEST_CASE("nw_log_evidence matches the Student-t predictive chain") {
  for (const Eigen::Index l : {1, 2, 3}) {
    NWHyper h = NWHyper::isotropic(l, 0.7, static_cast<double>(l) + 3.5, 0.3);
    h.m = Vector::LinSpaced(l, -0.5, 0.5);
    RngStream rng(31 + static_cast<std::uint64_t>(l));
    std::vector<Vector> pts;
    for (int i = 0; i < 5; ++i) {
      Vector p(l);
      for (Eigen::Index j = 0; j < l; ++j) p(j) = 1.5 * rng.normal();
      pts.push_back(p);
    }
    double chain = 0;
    std::vector<Vector> seen;
    for (const auto& p : pts) {
      chain += predictive(nw_posterior(h, seen), p);
      seen.push_back(p);
    }
    CHECK(nw_log_evidence(h, pts) == doctest::Approx(chain).epsilon(1e-10));
    CHECK(nw_log_evidence(h, {}) == 0.0);
  }
}

TEST_CASE("gibbs_sample_components") {
  const NWHyper h = NWHyper::isotropic(2, 1.0, 12.0, 0.05);
  RngStream rng(12);

  // With every sign on 0, component 1 sees no data and follows the prior: E[Lambda] = 0.6 I, E[mu] = 0.
  std::vector<Vector> z;
  for (int i = 0; i < 40; ++i) z.push_back(vec({5 + 0.1 * rng.normal(), 5 + 0.1 * rng.normal()}));
  const SignVector zeros(z.size(), 0);
  Matrix lam = Matrix::Zero(2, 2);
  Vector mu = Vector::Zero(2);
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const auto phi = gibbs_sample_components(z, zeros, h, 2, rng);
    lam += phi.components[1].lambda.data();
    mu += phi.components[1].mu;
  }
  lam /= n;
  mu /= n;
  CHECK(std::abs(lam(0, 0) - 0.6) < 0.03);
  CHECK(std::abs(lam(1, 1) - 0.6) < 0.03);
  CHECK(mu.norm() < 0.1);

  // Two well separated clusters with the right signs.
  std::vector<Vector> two;
  SignVector w;
  const Vector c0 = vec({-8, 0}), c1 = vec({8, 3});
  for (int i = 0; i < 200; ++i) {
    const bool first = i % 2 == 0;
    two.push_back((first ? c0 : c1) + vec({rng.normal(), rng.normal()}));
    w.push_back(first ? 0 : 1);
  }
  const auto phi = gibbs_sample_components(two, w, h, 2, rng);
  // Posterior sd of the mean is about 1/sqrt(100).
  CHECK((phi.components[0].mu - c0).cwiseAbs().maxCoeff() < 3 * 0.1 + 0.2);
  CHECK((phi.components[1].mu - c1).cwiseAbs().maxCoeff() < 3 * 0.1 + 0.2);

  RngStream r1(77), r2(77);
  CHECK(gibbs_sample_components(two, w, h, 2, r1) == gibbs_sample_components(two, w, h, 2, r2));
}

TEST_CASE("sign_logits") {
  RngStream rng(2);
  ComponentSet one;
  one.components.push_back({vec({0.5, -0.2}), SpdMatrix(spd(2, rng))});
  MixtureWeights pi1{Vector::Constant(1, std::log(0.8))};
  const Vector z = vec({0.1, 0.3});
  const auto l1 = sign_logits(z, one, pi1);
  REQUIRE(l1.size() == 1);
  CHECK(l1[0] == doctest::Approx(std::log(0.8) + dense_logpdf(z, one.components[0].mu, one.components[0].lambda.data())));

  ComponentSet grid;
  for (int k = 0; k < 4; ++k) grid.components.push_back({vec({3.0 * k, -1.0 * k}), SpdMatrix::identity(2)});
  for (int j = 0; j < 4; ++j) {
    const auto l = sign_logits(grid.components[j].mu, grid, MixtureWeights::uniform(4));
    CHECK(std::max_element(l.begin(), l.end()) - l.begin() == j);
  }

  for (int n = 0; n < 100; ++n) {
    const Eigen::Index dim = 1 + static_cast<Eigen::Index>(rng.uniform_index(4));
    const std::size_t k = 2 + rng.uniform_index(4);
    ComponentSet phi;
    Vector log_pi(static_cast<Eigen::Index>(k));
    std::vector<double> pi(k);
    double total = 0;
    for (std::size_t i = 0; i < k; ++i) {
      Vector m(dim);
      for (Eigen::Index j = 0; j < dim; ++j) m(j) = rng.normal();
      phi.components.push_back({m, SpdMatrix(spd(dim, rng))});
      pi[i] = 0.1 + rng.uniform();
      total += pi[i];
    }
    for (std::size_t i = 0; i < k; ++i) log_pi(static_cast<Eigen::Index>(i)) = std::log(pi[i] / total);
    Vector x(dim);
    for (Eigen::Index j = 0; j < dim; ++j) x(j) = rng.normal();
    // Bayes rule with plain densities.
    std::vector<double> dense(k);
    double s = 0;
    for (std::size_t i = 0; i < k; ++i) {
      dense[i] = pi[i] / total * std::exp(dense_logpdf(x, phi.components[i].mu, phi.components[i].lambda.data()));
      s += dense[i];
    }
    const auto got = normalised(sign_logits(x, phi, MixtureWeights{log_pi}));
    for (std::size_t i = 0; i < k; ++i) CHECK(got[i] == doctest::Approx(dense[i] / s).epsilon(1e-9));
  }

  CHECK_THROWS_CODE(sign_logits(vec({1, 2, 3}), grid, MixtureWeights::uniform(4)), ErrorCode::DimensionMismatch);
}

TEST_CASE("sample_sign") {
  RngStream rng(19);
  ComponentSet one;
  one.components.push_back({vec({0, 0}), SpdMatrix::identity(2)});
  for (int i = 0; i < 200; ++i) CHECK(sample_sign(vec({rng.normal(), rng.normal()}), one, MixtureWeights::uniform(1), rng) == 0);

  ComponentSet sym;
  sym.components.push_back({vec({-1, 0}), SpdMatrix::identity(2)});
  sym.components.push_back({vec({1, 0}), SpdMatrix::identity(2)});
  const int n = 100000;
  int ones = 0;
  for (int i = 0; i < n; ++i) ones += sample_sign(vec({0, 0.4}), sym, MixtureWeights::uniform(2), rng);
  CHECK(std::abs(ones / double(n) - 0.5) < 0.01);

  ComponentSet asym;
  asym.components.push_back({vec({-1, 0}), SpdMatrix::identity(2, 2.0)});
  asym.components.push_back({vec({0.5, 1}), SpdMatrix::identity(2, 0.7)});
  asym.components.push_back({vec({2, -1}), SpdMatrix::identity(2)});
  const Vector z = vec({0.2, 0.1});
  const auto p = normalised(sign_logits(z, asym, MixtureWeights::uniform(3)));
  std::vector<int> counts(3, 0);
  for (int i = 0; i < n; ++i) ++counts[sample_sign(z, asym, MixtureWeights::uniform(3), rng)];
  for (int k = 0; k < 3; ++k) CHECK(std::abs(counts[k] / double(n) - p[k]) < 0.01);
}

TEST_CASE("acceptance_probability") {
  ComponentSet phi;
  phi.components.push_back({vec({0, 0}), SpdMatrix::identity(2)});
  phi.components.push_back({vec({2, 0}), SpdMatrix::identity(2)});
  CHECK(acceptance_probability(vec({0.3, 0.4}), phi, 1, 1) == 1.0);
  CHECK(acceptance_probability(vec({2, 0}), phi, 1, 0) == 1.0);
  CHECK(acceptance_probability(vec({0, 0}), phi, 1, 0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
  // Far into component 0's tail the ratio underflows to 0.
  CHECK(acceptance_probability(vec({-1e3, 0}), phi, 1, 0) == 0.0);
  CHECK_THROWS_CODE(acceptance_probability(vec({0, 0}), phi, 2, 0), ErrorCode::IndexOutOfRange);
  CHECK_THROWS_CODE(acceptance_probability(vec({0, 0}), phi, 0, -1), ErrorCode::IndexOutOfRange);
}

TEST_CASE("centralized_sign_logits") {
  RngStream rng(41);
  ComponentSet a, flat, b;
  for (int k = 0; k < 3; ++k) {
    a.components.push_back({vec({rng.normal(), rng.normal()}), SpdMatrix(spd(2, rng))});
    b.components.push_back({vec({rng.normal(), rng.normal()}), SpdMatrix(spd(2, rng))});
    flat.components.push_back({vec({0.5, 0.5}), SpdMatrix::identity(2)});
  }
  const auto pi = MixtureWeights::uniform(3);
  const Vector za = vec({0.3, -0.2}), zb = vec({-1, 0.7});

  const auto c = centralized_sign_logits(za, zb, a, flat, pi);
  const auto s = sign_logits(za, a, pi);
  for (int k = 1; k < 3; ++k) CHECK((c[k] - s[k]) == doctest::Approx(c[0] - s[0]).epsilon(1e-12));

  // Product of the two per-agent posteriors divided by the prior, renormalised.
  const auto pa = normalised(sign_logits(za, a, pi));
  const auto pb = normalised(sign_logits(zb, b, pi));
  std::vector<double> prod(3);
  double tot = 0;
  for (int k = 0; k < 3; ++k) tot += (prod[k] = pa[k] * pb[k] * 3.0);
  const auto got = normalised(centralized_sign_logits(za, zb, a, b, pi));
  for (int k = 0; k < 3; ++k) CHECK(got[k] == doctest::Approx(prod[k] / tot).epsilon(1e-10));

  const auto ab = centralized_sign_logits(za, zb, a, b, pi);
  const auto ba = centralized_sign_logits(zb, za, b, a, pi);
  for (int k = 0; k < 3; ++k) CHECK(ab[k] == doctest::Approx(ba[k]).epsilon(1e-12));

  ComponentSet two;
  two.components.assign(a.components.begin(), a.components.begin() + 2);
  CHECK_THROWS_CODE(centralized_sign_logits(za, zb, a, two, pi), ErrorCode::KMismatch);
}
