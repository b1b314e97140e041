#include "gmm.hpp"

#include <atomic>
#include <cmath>
#include <numbers>
#include <string>

#include "error.hpp"

namespace mhng {

namespace fault {
namespace {
std::atomic<bool> g_flip{false};
}
void set_flip_acceptance(bool on) noexcept { g_flip.store(on); }
bool flip_acceptance() noexcept { return g_flip.load(); }
}  // namespace fault

namespace {

double log_multigamma(double a, Eigen::Index dim) {
  const auto p = static_cast<double>(dim);
  double acc = 0.25 * p * (p - 1.0) * std::log(std::numbers::pi);
  for (Eigen::Index j = 0; j < dim; ++j) acc += std::lgamma(a - 0.5 * static_cast<double>(j));
  return acc;
}

void check_index(Sign k, std::size_t n) {
  if (k < 0 || static_cast<std::size_t>(k) >= n) {
    throw Error(ErrorCode::IndexOutOfRange, "sign " + std::to_string(k) + " not in [0, " + std::to_string(n) + ")");
  }
}

}  // namespace

const Component& ComponentSet::at(Sign k) const {
  check_index(k, components.size());
  return components[static_cast<std::size_t>(k)];
}

MixtureWeights MixtureWeights::uniform(std::size_t k) {
  return {Vector::Constant(static_cast<Eigen::Index>(k), -std::log(static_cast<double>(k)))};
}

NWHyper nw_posterior(const NWHyper& h, const std::vector<Vector>& points) {
  if (points.empty()) return h;
  const Eigen::Index l = h.dim();
  const auto n = static_cast<double>(points.size());
  Vector mean = Vector::Zero(l);
  for (const auto& x : points) {
    if (x.size() != l) throw Error(ErrorCode::DimensionMismatch, "nw_posterior point dim");
    mean += x;
  }
  mean /= n;
  Matrix scatter = Matrix::Zero(l, l);
  for (const auto& x : points) {
    const Vector c = x - mean;
    scatter.noalias() += c * c.transpose();
  }
  const Vector dm = mean - h.m;
  NWHyper post;
  post.alpha = h.alpha + n;
  post.nu = h.nu + n;
  post.m = (h.alpha * h.m + n * mean) / post.alpha;
  Matrix beta_inv = h.beta.inverse() + scatter + (h.alpha * n / post.alpha) * (dm * dm.transpose());
  beta_inv = 0.5 * (beta_inv + beta_inv.transpose());
  Matrix beta = SpdMatrix(beta_inv).inverse();
  post.beta = SpdMatrix(0.5 * (beta + beta.transpose()));
  return post;
}

double nw_log_evidence(const NWHyper& h, const std::vector<Vector>& points) {
  if (points.empty()) return 0.0;
  const NWHyper post = nw_posterior(h, points);
  const Eigen::Index l = h.dim();
  const auto dl = static_cast<double>(l);
  const auto n = static_cast<double>(points.size());
  return -0.5 * n * dl * std::log(std::numbers::pi) + 0.5 * dl * std::log(h.alpha / post.alpha) +
         0.5 * post.nu * post.beta.log_det() - 0.5 * h.nu * h.beta.log_det() +
         log_multigamma(0.5 * post.nu, l) - log_multigamma(0.5 * h.nu, l);
}

ComponentSet sample_prior_components(const NWHyper& h, std::size_t k, RngStream& rng) {
  ComponentSet phi;
  phi.components.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    auto [mu, lambda] = sample_normal_wishart(h, rng);
    phi.components.push_back({std::move(mu), std::move(lambda)});
  }
  return phi;
}

ComponentSet gibbs_sample_components(const std::vector<Vector>& z, const SignVector& w,
                                     const NWHyper& h, std::size_t k, RngStream& rng) {
  if (z.size() != w.size()) throw Error(ErrorCode::LengthMismatch, "|z| != |w|");
  std::vector<std::vector<Vector>> groups(k);
  for (std::size_t d = 0; d < z.size(); ++d) {
    check_index(w[d], k);
    groups[static_cast<std::size_t>(w[d])].push_back(z[d]);
  }
  ComponentSet phi;
  phi.components.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    auto [mu, lambda] = sample_normal_wishart(nw_posterior(h, groups[j]), rng);
    phi.components.push_back({std::move(mu), std::move(lambda)});
  }
  return phi;
}

std::vector<double> sign_logits(const Vector& z, const ComponentSet& phi, const MixtureWeights& pi) {
  if (pi.size() != phi.size()) throw Error(ErrorCode::KMismatch, "mixture weights vs components");
  std::vector<double> logits(phi.size());
  for (std::size_t k = 0; k < phi.size(); ++k) {
    const auto& c = phi.components[k];
    logits[k] = pi.log_pi[static_cast<Eigen::Index>(k)] + mvn_logpdf(z, c.mu, c.lambda);
  }
  return logits;
}

Sign sample_sign(const Vector& z, const ComponentSet& phi, const MixtureWeights& pi, RngStream& rng) {
  const auto logits = sign_logits(z, phi, pi);
  return static_cast<Sign>(sample_categorical_log(logits, rng));
}

double acceptance_probability(const Vector& z_listener, const ComponentSet& phi_listener,
                              Sign proposed, Sign current) {
  const auto& prop = phi_listener.at(proposed);
  const auto& cur = phi_listener.at(current);
  if (proposed == current) return 1.0;
  double log_ratio = mvn_logpdf(z_listener, prop.mu, prop.lambda) - mvn_logpdf(z_listener, cur.mu, cur.lambda);
  if (fault::flip_acceptance()) log_ratio = -log_ratio;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

std::vector<double> centralized_sign_logits(const Vector& z_a, const Vector& z_b,
                                            const ComponentSet& phi_a, const ComponentSet& phi_b,
                                            const MixtureWeights& pi) {
  if (phi_a.size() != phi_b.size() || pi.size() != phi_a.size()) {
    throw Error(ErrorCode::KMismatch, "agents disagree on K");
  }
  std::vector<double> logits(phi_a.size());
  for (std::size_t k = 0; k < phi_a.size(); ++k) {
    const auto& ca = phi_a.components[k];
    const auto& cb = phi_b.components[k];
    logits[k] = pi.log_pi[static_cast<Eigen::Index>(k)] + mvn_logpdf(z_a, ca.mu, ca.lambda) +
                mvn_logpdf(z_b, cb.mu, cb.lambda);
  }
  return logits;
}

}  // namespace mhng
