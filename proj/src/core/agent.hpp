#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "gmm.hpp"
#include "vae.hpp"

namespace mhng {

enum class AgentId { A, B };

const char* agent_name(AgentId id) noexcept;

struct MiSchedule {
  int mi_rounds = 5;
  int vae_iters_per_round = 100;

  void validate() const;
};

enum class AcceptRule { MetropolisHastings, Always };

struct AgentOptions {
  NWHyper hyper;
  std::size_t k = 10;
  /// Mutual inference between the VAE and the mixture during learn().
  bool mutual_inference = true;
  TrainConfig train;
  PerceiveMode perceive_mode = PerceiveMode::Sample;
  /// VAE steps against a standard normal prior before the game starts.
  int pretrain_iters = 0;
};

class AgentProbe;

/// VAE weights after the optional warm-up, with the agent's stream at the
/// point where construction continues.
struct PretrainedVae {
  VaeParams params;
  RngStream rng;
};

/// One GMM+VAE agent. Only sign values leave through the public interface;
/// latents and parameters stay private (AgentProbe exists for reporting
/// and the centralised topline, never for the game exchange).
class Agent {
 public:
  /// Agent that perceives images through its own VAE.
  static Agent with_vae(AgentId id, const AgentOptions& opts, const VaeArch& arch, const Matrix& observations,
                        std::uint64_t seed);
  /// Warm-up half of with_vae; the result can be reused across conditions.
  static PretrainedVae pretrain(const AgentOptions& opts, const VaeArch& arch, const Matrix& observations,
                                std::uint64_t seed);
  static Agent with_pretrained(AgentId id, const AgentOptions& opts, PretrainedVae pre, const Matrix& observations);
  /// Agent whose latents are fixed (perception disabled).
  static Agent with_latents(AgentId id, const AgentOptions& opts, std::vector<Vector> latents, std::uint64_t seed);

  AgentId id() const noexcept { return id_; }
  std::size_t num_objects() const noexcept { return z_.size(); }
  std::size_t num_signs() const noexcept { return opts_.k; }
  Eigen::Index latent_dim() const noexcept { return opts_.hyper.dim(); }
  bool has_vae() const noexcept { return vae_.has_value(); }

  /// Samples a name for object d from the agent's own posterior.
  Sign utter(std::size_t d);
  /// Accepts the proposed sign with the MH probability; returns the sign
  /// the agent now holds for object d.
  Sign judge(std::size_t d, Sign proposed, AcceptRule rule = AcceptRule::MetropolisHastings);
  /// Replaces every w_d with a draw from the agent's own posterior.
  void resample_signs();
  /// Refresh of (theta, phi) and z given the current signs.
  void learn(const Matrix& observations, const MiSchedule& schedule);
  void perceive_all(const Matrix& observations);
  Vector recall(Sign w) const;

  const SignVector& signs() const noexcept { return w_; }
  const AgentOptions& options() const noexcept { return opts_; }

  void save(std::ostream& os) const;
  static Agent load(std::istream& is);
  void save(const std::filesystem::path& path) const;
  static Agent load(const std::filesystem::path& path);

 private:
  friend class AgentProbe;
  Agent(AgentId id, AgentOptions opts, std::uint64_t seed);
  void check_index(std::size_t d) const;
  void refresh_components();

  AgentId id_;
  AgentOptions opts_;
  MixtureWeights pi_;
  ComponentSet phi_;
  std::optional<VaeParams> vae_;
  std::vector<Vector> z_;
  SignVector w_;
  RngStream rng_;
};

/// Read access to an agent's internals for metrics, exports and the
/// centralised topline sampler.
class AgentProbe {
 public:
  static const std::vector<Vector>& latents(const Agent& a) { return a.z_; }
  static const ComponentSet& components(const Agent& a) { return a.phi_; }
  static const std::optional<VaeParams>& vae(const Agent& a) { return a.vae_; }
  static RngStream& rng(Agent& a) { return a.rng_; }
  /// Overwrites the agent's signs (centralised topline only).
  static void assign_signs(Agent& a, const SignVector& w);
  /// Overwrites the mixture parameters (fixed-parameter chain checks).
  static void assign_components(Agent& a, ComponentSet phi);
};

}  // namespace mhng
