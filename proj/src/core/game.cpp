#include "game.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "error.hpp"

namespace mhng {

namespace {

constexpr std::uint64_t kStreamA = 1;
constexpr std::uint64_t kStreamB = 2;
constexpr std::uint64_t kStreamTopline = 3;
constexpr std::uint64_t kStreamOrder = 4;

double safe_kappa(const SignVector& a, const SignVector& b) {
  try {
    return cohen_kappa(a, b);
  } catch (const Error&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

void speak_all(const GameConfig& cfg, int t, Agent& speaker, Agent& listener, AcceptRule rule, CommStats& stats) {
  for (const std::size_t d : visit_order(cfg, t)) mh_communication(speaker, listener, d, rule, &stats);
}

void topline_assign(const GameConfig& cfg, int t, Agent& a, Agent& b, RngStream& rng) {
  const auto pi = MixtureWeights::uniform(cfg.k);
  const auto& za = AgentProbe::latents(a);
  const auto& zb = AgentProbe::latents(b);
  SignVector w(za.size());
  for (const std::size_t d : visit_order(cfg, t)) {
    const auto logits = centralized_sign_logits(za[d], zb[d], AgentProbe::components(a), AgentProbe::components(b), pi);
    w[d] = static_cast<Sign>(sample_categorical_log(logits, rng));
  }
  AgentProbe::assign_signs(a, w);
  AgentProbe::assign_signs(b, w);
}

}  // namespace

std::string_view condition_name(Condition c) noexcept {
  switch (c) {
    case Condition::Mh: return "mh";
    case Condition::NoComm: return "no_comm";
    case Condition::AllAccept: return "all_accept";
    case Condition::GibbsTopline: return "gibbs_topline";
    case Condition::MhOneWay: return "mh_one_way";
  }
  return "?";
}

std::optional<Condition> parse_condition(std::string_view name) noexcept {
  for (const auto c : {Condition::Mh, Condition::NoComm, Condition::AllAccept, Condition::GibbsTopline,
                       Condition::MhOneWay}) {
    if (condition_name(c) == name) return c;
  }
  return std::nullopt;
}

void GameConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "K must be >= 1");
  if (iterations < 0) throw Error(ErrorCode::InvalidConfig, "T must be >= 0");
  if (l < 1) throw Error(ErrorCode::InvalidConfig, "L must be >= 1");
  if (hyper.dim() != l) throw Error(ErrorCode::InvalidConfig, "hyper.m dimension must equal L");
  hyper.validate();
  schedule.validate();
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream) {
  return splitmix64(master_seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL);
}

std::uint64_t agent_seed(std::uint64_t master_seed, AgentId id) {
  return derive_seed(master_seed, id == AgentId::A ? kStreamA : kStreamB);
}

std::vector<std::size_t> visit_order(const GameConfig& cfg, int t) {
  std::vector<std::size_t> order(cfg.d);
  for (std::size_t i = 0; i < cfg.d; ++i) order[i] = i;
  if (cfg.shuffle_order) {
    RngStream rng(derive_seed(cfg.seed, kStreamOrder + 1000003ULL * static_cast<std::uint64_t>(t)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }
  return order;
}

void GameTrace::write_csv(std::ostream& os) const {
  os << "t,ari_a,ari_b,kappa,acc_ab,acc_ba\n";
  const auto old = os.precision(10);
  for (const auto& r : iterations) {
    os << r.t << ',' << r.ari_a << ',' << r.ari_b << ',' << r.kappa << ',' << r.acc_ab << ',' << r.acc_ba << '\n';
  }
  os.precision(old);
}

void GameTrace::write_signs_csv(std::ostream& os) const {
  auto row = [&](int t, const char* agent, const SignVector& w) {
    os << t << ',' << agent;
    for (const Sign s : w) os << ',' << s;
    os << '\n';
  };
  for (const auto& r : iterations) {
    if (!r.w_a.empty()) row(r.t, "A", r.w_a);
    if (!r.w_b.empty()) row(r.t, "B", r.w_b);
  }
}

Sign mh_communication(Agent& speaker, Agent& listener, std::size_t d, AcceptRule rule, CommStats* stats) {
  const Sign proposal = speaker.utter(d);
  const Sign held = listener.judge(d, proposal, rule);
  if (stats != nullptr) {
    ++stats->proposals;
    if (held == proposal) ++stats->accepted;
  }
  return held;
}

GameTrace run_game(const GameConfig& cfg, Agent& a, Agent& b, const Matrix& obs_a, const Matrix& obs_b,
                   const LabelVector& truth, const GameHooks& hooks) {
  cfg.validate();
  if (a.num_objects() != cfg.d || b.num_objects() != cfg.d) {
    throw Error(ErrorCode::LengthMismatch, "agents must hold D objects");
  }
  if (a.num_signs() != cfg.k || b.num_signs() != cfg.k) throw Error(ErrorCode::KMismatch, "agents vs config K");
  if (!truth.empty() && truth.size() != cfg.d) throw Error(ErrorCode::LengthMismatch, "|truth| != D");

  RngStream topline_rng(derive_seed(cfg.seed, kStreamTopline));
  GameTrace trace;
  for (int t = 1; t <= cfg.iterations; ++t) {
    const auto start = std::chrono::steady_clock::now();
    IterationRecord rec;
    rec.t = t;
    CommStats ab, ba;
    switch (cfg.condition) {
      case Condition::Mh:
      case Condition::AllAccept: {
        const auto rule = cfg.condition == Condition::Mh ? AcceptRule::MetropolisHastings : AcceptRule::Always;
        speak_all(cfg, t, a, b, rule, ab);
        b.learn(obs_b, cfg.schedule);
        speak_all(cfg, t, b, a, rule, ba);
        a.learn(obs_a, cfg.schedule);
        break;
      }
      case Condition::MhOneWay:
        speak_all(cfg, t, a, b, AcceptRule::MetropolisHastings, ab);
        b.learn(obs_b, cfg.schedule);
        a.resample_signs();
        a.learn(obs_a, cfg.schedule);
        break;
      case Condition::NoComm:
        b.resample_signs();
        b.learn(obs_b, cfg.schedule);
        a.resample_signs();
        a.learn(obs_a, cfg.schedule);
        break;
      case Condition::GibbsTopline:
        topline_assign(cfg, t, a, b, topline_rng);
        b.learn(obs_b, cfg.schedule);
        topline_assign(cfg, t, a, b, topline_rng);
        a.learn(obs_a, cfg.schedule);
        break;
    }
    rec.acc_ab = ab.accepted;
    rec.acc_ba = ba.accepted;
    rec.signs_exchanged = ab.proposals + ba.proposals;
    rec.w_a = a.signs();
    rec.w_b = b.signs();
    if (hooks.metrics) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      rec.ari_a = truth.size() >= 2 ? adjusted_rand_index(truth, rec.w_a) : nan;
      rec.ari_b = truth.size() >= 2 ? adjusted_rand_index(truth, rec.w_b) : nan;
      rec.kappa = safe_kappa(rec.w_a, rec.w_b);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool keep_going = !hooks.on_iteration || hooks.on_iteration(rec);
    if (hooks.record) trace.iterations.push_back(std::move(rec));
    if (!keep_going) break;
  }
  return trace;
}

AgentOptions make_agent_options(const GameConfig& cfg, const AgentSetup& setup) {
  AgentOptions opts;
  opts.hyper = cfg.hyper;
  opts.k = cfg.k;
  opts.mutual_inference = cfg.mi_enabled;
  opts.train = setup.train;
  opts.perceive_mode = setup.perceive_mode;
  opts.pretrain_iters = setup.pretrain_iters;
  return opts;
}

std::pair<PretrainedVae, PretrainedVae> pretrain_agents(const GameConfig& cfg, const AgentSetup& setup,
                                                        const Matrix& obs_a, const Matrix& obs_b) {
  const auto opts = make_agent_options(cfg, setup);
  return {Agent::pretrain(opts, setup.arch, obs_a, agent_seed(cfg.seed, AgentId::A)),
          Agent::pretrain(opts, setup.arch, obs_b, agent_seed(cfg.seed, AgentId::B))};
}

GameResult run(const GameConfig& cfg, const AgentSetup& setup, const Matrix& obs_a, const Matrix& obs_b,
               const LabelVector& truth, const std::pair<PretrainedVae, PretrainedVae>* pretrained,
               const GameHooks& hooks) {
  cfg.validate();
  if (static_cast<std::size_t>(obs_a.cols()) != cfg.d || static_cast<std::size_t>(obs_b.cols()) != cfg.d) {
    throw Error(ErrorCode::LengthMismatch, "|obs_a| = |obs_b| = D required");
  }
  const auto opts = make_agent_options(cfg, setup);
  auto pre = pretrained != nullptr ? *pretrained : pretrain_agents(cfg, setup, obs_a, obs_b);
  Agent a = Agent::with_pretrained(AgentId::A, opts, std::move(pre.first), obs_a);
  Agent b = Agent::with_pretrained(AgentId::B, opts, std::move(pre.second), obs_b);
  GameTrace trace = run_game(cfg, a, b, obs_a, obs_b, truth, hooks);
  return {std::move(trace), std::move(a), std::move(b)};
}

GameResult run_latent(const GameConfig& cfg, std::vector<Vector> z_a, std::vector<Vector> z_b, const LabelVector& truth,
                      const GameHooks& hooks) {
  cfg.validate();
  AgentOptions opts;
  opts.hyper = cfg.hyper;
  opts.k = cfg.k;
  opts.mutual_inference = false;
  Agent a = Agent::with_latents(AgentId::A, opts, std::move(z_a), agent_seed(cfg.seed, AgentId::A));
  Agent b = Agent::with_latents(AgentId::B, opts, std::move(z_b), agent_seed(cfg.seed, AgentId::B));
  GameTrace trace = run_game(cfg, a, b, Matrix(), Matrix(), truth, hooks);
  return {std::move(trace), std::move(a), std::move(b)};
}

namespace {

template <typename F>
void enumerate_sign_vectors(const AgreementInstance& inst, F&& visit) {
  const std::size_t d = inst.z_a.size();
  if (inst.z_b.size() != d) throw Error(ErrorCode::LengthMismatch, "agreement instance |z_a| != |z_b|");
  const double combos = std::pow(static_cast<double>(inst.k), static_cast<double>(d));
  if (combos > 1e7) throw Error(ErrorCode::InvalidConfig, "instance too large to enumerate");
  const auto log_prior = -static_cast<double>(d) * std::log(static_cast<double>(inst.k));
  SignVector w(d, 0);
  std::vector<double> log_scores;
  std::vector<SignVector> vectors;
  for (;;) {
    double score = log_prior;
    for (const auto* z : {&inst.z_a, &inst.z_b}) {
      std::vector<std::vector<Vector>> groups(inst.k);
      for (std::size_t i = 0; i < d; ++i) groups[static_cast<std::size_t>(w[i])].push_back((*z)[i]);
      for (const auto& g : groups) score += nw_log_evidence(inst.hyper, g);
    }
    log_scores.push_back(score);
    vectors.push_back(w);
    std::size_t pos = 0;
    while (pos < d && ++w[pos] == static_cast<Sign>(inst.k)) w[pos++] = 0;
    if (pos == d) break;
  }
  const double lse = log_sum_exp(log_scores);
  for (std::size_t i = 0; i < vectors.size(); ++i) visit(vectors[i], std::exp(log_scores[i] - lse));
}

}  // namespace

std::vector<std::vector<double>> exact_sign_marginals(const AgreementInstance& inst) {
  std::vector<std::vector<double>> m(inst.z_a.size(), std::vector<double>(inst.k, 0.0));
  enumerate_sign_vectors(inst, [&](const SignVector& w, double p) {
    for (std::size_t d = 0; d < w.size(); ++d) m[d][static_cast<std::size_t>(w[d])] += p;
  });
  return m;
}

std::vector<std::vector<double>> exact_coassignment(const AgreementInstance& inst) {
  const std::size_t d = inst.z_a.size();
  std::vector<std::vector<double>> c(d, std::vector<double>(d, 0.0));
  enumerate_sign_vectors(inst, [&](const SignVector& w, double p) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) c[i][j] += w[i] == w[j] ? p : 0.0;
    }
  });
  return c;
}

AgreementReport posterior_agreement_suite(const AgreementInstance& inst, Condition condition, long sweeps,
                                          std::uint64_t seed) {
  const std::size_t d = inst.z_a.size();
  AgreementReport report;
  report.exact = exact_sign_marginals(inst);
  const auto exact_co = exact_coassignment(inst);

  GameConfig cfg;
  cfg.k = inst.k;
  cfg.d = d;
  cfg.l = inst.hyper.dim();
  cfg.hyper = inst.hyper;
  cfg.condition = condition;
  cfg.mi_enabled = false;
  cfg.iterations = static_cast<int>(sweeps);
  cfg.seed = seed;
  cfg.schedule = {1, 0};

  AgentOptions opts;
  opts.hyper = inst.hyper;
  opts.k = inst.k;
  opts.mutual_inference = false;
  Agent a = Agent::with_latents(AgentId::A, opts, inst.z_a, agent_seed(seed, AgentId::A));
  Agent b = Agent::with_latents(AgentId::B, opts, inst.z_b, agent_seed(seed, AgentId::B));

  std::vector<std::vector<double>> count_a(d, std::vector<double>(inst.k, 0.0)), count_b = count_a;
  std::vector<std::vector<double>> co_b(d, std::vector<double>(d, 0.0));
  GameHooks hooks;
  hooks.record = false;
  hooks.metrics = false;
  hooks.on_iteration = [&](const IterationRecord& r) {
    for (std::size_t i = 0; i < d; ++i) {
      count_a[i][static_cast<std::size_t>(r.w_a[i])] += 1.0;
      count_b[i][static_cast<std::size_t>(r.w_b[i])] += 1.0;
      for (std::size_t j = 0; j < d; ++j) co_b[i][j] += r.w_b[i] == r.w_b[j] ? 1.0 : 0.0;
    }
    return true;
  };
  run_game(cfg, a, b, Matrix(), Matrix(), {}, hooks);

  const auto n = static_cast<double>(sweeps);
  report.sweeps = sweeps;
  report.empirical_a = count_a;
  report.empirical_b = count_b;
  for (std::size_t i = 0; i < d; ++i) {
    double tva = 0.0, tvb = 0.0;
    for (std::size_t k = 0; k < inst.k; ++k) {
      report.empirical_a[i][k] /= n;
      report.empirical_b[i][k] /= n;
      tva += 0.5 * std::abs(report.empirical_a[i][k] - report.exact[i][k]);
      tvb += 0.5 * std::abs(report.empirical_b[i][k] - report.exact[i][k]);
    }
    report.tv_a.push_back(tva);
    report.tv_b.push_back(tvb);
    report.max_tv = std::max(report.max_tv, tvb);
    if (condition != Condition::MhOneWay) report.max_tv = std::max(report.max_tv, tva);
    for (std::size_t j = 0; j < d; ++j) {
      report.max_coassignment_error = std::max(report.max_coassignment_error, std::abs(co_b[i][j] / n - exact_co[i][j]));
    }
  }
  return report;
}

}  // namespace mhng
