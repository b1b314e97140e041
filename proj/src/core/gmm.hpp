#pragma once

#include <cstddef>
#include <vector>

#include "probability.hpp"

namespace mhng {

using Sign = int;
using SignVector = std::vector<Sign>;

struct Component {
  Vector mu;
  SpdMatrix lambda;

  bool operator==(const Component&) const = default;
};

/// The per-agent mixture parameters: K (mean, precision) pairs.
struct ComponentSet {
  std::vector<Component> components;

  std::size_t size() const noexcept { return components.size(); }
  Eigen::Index dim() const noexcept { return components.empty() ? 0 : components.front().mu.size(); }
  const Component& at(Sign k) const;

  bool operator==(const ComponentSet&) const = default;
};

struct MixtureWeights {
  Vector log_pi;

  static MixtureWeights uniform(std::size_t k);
  std::size_t size() const noexcept { return static_cast<std::size_t>(log_pi.size()); }
};

/// Conjugate update of the normal-Wishart prior given points.
NWHyper nw_posterior(const NWHyper& h, const std::vector<Vector>& points);

/// Log marginal likelihood of points under the normal-Wishart prior with
/// the component parameters integrated out. Used as an exact reference by
/// the posterior-agreement checks; the sampler itself never needs it.
double nw_log_evidence(const NWHyper& h, const std::vector<Vector>& points);

ComponentSet sample_prior_components(const NWHyper& h, std::size_t k, RngStream& rng);

/// Draws every (mu_k, Lambda_k) from its conditional posterior given the
/// latents assigned to k. Empty components are drawn from the prior.
ComponentSet gibbs_sample_components(const std::vector<Vector>& z, const SignVector& w,
                                     const NWHyper& h, std::size_t k, RngStream& rng);

/// Unnormalised log posterior over signs for one latent.
std::vector<double> sign_logits(const Vector& z, const ComponentSet& phi, const MixtureWeights& pi);

Sign sample_sign(const Vector& z, const ComponentSet& phi, const MixtureWeights& pi, RngStream& rng);

/// min(1, N(z | mu_proposed, Lambda_proposed) / N(z | mu_current, Lambda_current)),
/// evaluated in log space. The mixture weights cancel and are not an input.
double acceptance_probability(const Vector& z_listener, const ComponentSet& phi_listener,
                              Sign proposed, Sign current);

/// Joint sign logits using both agents' latents (the centralised sampler).
std::vector<double> centralized_sign_logits(const Vector& z_a, const Vector& z_b,
                                            const ComponentSet& phi_a, const ComponentSet& phi_b,
                                            const MixtureWeights& pi);

namespace fault {
/// Fault-injection switch for mutation checks of the verification suite:
/// when set, acceptance_probability inverts its log ratio.
void set_flip_acceptance(bool on) noexcept;
bool flip_acceptance() noexcept;
}  // namespace fault

}  // namespace mhng
