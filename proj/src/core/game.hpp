#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "agent.hpp"
#include "metrics.hpp"

namespace mhng {

enum class Condition { Mh, NoComm, AllAccept, GibbsTopline, MhOneWay };

std::string_view condition_name(Condition c) noexcept;
std::optional<Condition> parse_condition(std::string_view name) noexcept;

struct GameConfig {
  std::size_t k = 10;
  int iterations = 100;
  std::size_t d = 0;
  Eigen::Index l = 12;
  Condition condition = Condition::Mh;
  bool mi_enabled = true;
  MiSchedule schedule;
  NWHyper hyper = NWHyper::isotropic(12, 1.0, 12.0, 0.05);
  std::uint64_t seed = 0;
  /// Visit objects in a per-iteration shuffled order instead of 0..D-1.
  bool shuffle_order = false;

  void validate() const;
};

/// Stream ids under the master seed.
std::uint64_t agent_seed(std::uint64_t master_seed, AgentId id);
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream);

/// Order in which objects are visited during iteration t.
std::vector<std::size_t> visit_order(const GameConfig& cfg, int t);

struct IterationRecord {
  int t = 0;
  SignVector w_a;
  SignVector w_b;
  std::size_t acc_ab = 0;
  std::size_t acc_ba = 0;
  /// Sign values that crossed the agent boundary during the iteration.
  std::size_t signs_exchanged = 0;
  double ari_a = 0.0;
  double ari_b = 0.0;
  double kappa = 0.0;
  double seconds = 0.0;
};

struct GameTrace {
  std::vector<IterationRecord> iterations;

  /// t,ari_a,ari_b,kappa,acc_ab,acc_ba
  void write_csv(std::ostream& os) const;
  /// t,agent,w_0,...,w_{D-1}
  void write_signs_csv(std::ostream& os) const;
};

struct CommStats {
  std::size_t proposals = 0;
  std::size_t accepted = 0;
};

/// One MH exchange about object d: the speaker names it, the listener
/// judges. Only the sign value passes between the two agents.
Sign mh_communication(Agent& speaker, Agent& listener, std::size_t d, AcceptRule rule = AcceptRule::MetropolisHastings,
                      CommStats* stats = nullptr);

struct GameHooks {
  /// Called after every iteration; return false to stop early.
  std::function<bool(const IterationRecord&)> on_iteration;
  /// Keep per-iteration records in the returned trace.
  bool record = true;
  /// Compute ARI / kappa each iteration (needs truth).
  bool metrics = true;
};

/// Plays the configured condition between two prepared agents. obs_a and
/// obs_b may be empty for latent-only agents.
GameTrace run_game(const GameConfig& cfg, Agent& a, Agent& b, const Matrix& obs_a, const Matrix& obs_b,
                   const LabelVector& truth, const GameHooks& hooks = {});

struct AgentSetup {
  VaeArch arch;
  TrainConfig train;
  PerceiveMode perceive_mode = PerceiveMode::Sample;
  int pretrain_iters = 0;
};

AgentOptions make_agent_options(const GameConfig& cfg, const AgentSetup& setup);

struct GameResult {
  GameTrace trace;
  Agent a;
  Agent b;
};

/// VAE warm-up for both agents. Depends on the seed, setup and data but
/// not on the condition, so one result can serve a whole sweep.
std::pair<PretrainedVae, PretrainedVae> pretrain_agents(const GameConfig& cfg, const AgentSetup& setup,
                                                        const Matrix& obs_a, const Matrix& obs_b);

/// Builds both VAE agents from the master seed and plays the game.
GameResult run(const GameConfig& cfg, const AgentSetup& setup, const Matrix& obs_a, const Matrix& obs_b,
               const LabelVector& truth, const std::pair<PretrainedVae, PretrainedVae>* pretrained = nullptr,
               const GameHooks& hooks = {});

/// Same with fixed latents (perception disabled).
GameResult run_latent(const GameConfig& cfg, std::vector<Vector> z_a, std::vector<Vector> z_b, const LabelVector& truth,
                      const GameHooks& hooks = {});

struct AgreementInstance {
  std::vector<Vector> z_a;
  std::vector<Vector> z_b;
  NWHyper hyper;
  std::size_t k = 2;
};

struct AgreementReport {
  /// exact[d][k] = P(w_d = k | z_a, z_b) by enumeration.
  std::vector<std::vector<double>> exact;
  std::vector<std::vector<double>> empirical_a;
  std::vector<std::vector<double>> empirical_b;
  std::vector<double> tv_a;
  std::vector<double> tv_b;
  /// Largest |P(w_d = w_e) - empirical| over object pairs, listener side.
  double max_coassignment_error = 0.0;
  double max_tv = 0.0;
  long sweeps = 0;
};

/// Exact sign marginals by enumerating all K^D sign vectors, each scored by
/// the mixture prior times both agents' normal-Wishart evidence.
std::vector<std::vector<double>> exact_sign_marginals(const AgreementInstance& inst);
std::vector<std::vector<double>> exact_coassignment(const AgreementInstance& inst);

/// Plays `sweeps` iterations of the condition on fixed latents and compares
/// empirical sign marginals with the enumeration. For one-way games only
/// the listener's chain is compared.
AgreementReport posterior_agreement_suite(const AgreementInstance& inst, Condition condition, long sweeps,
                                          std::uint64_t seed);

}  // namespace mhng
