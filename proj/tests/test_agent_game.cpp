#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "agent.hpp"
#include "data.hpp"
#include "game.hpp"
#include "metrics.hpp"
#include "support.hpp"

using namespace mhng;

namespace {

Vector vec(double a, double b) { return (Vector(2) << a, b).finished(); }

AgentOptions latent_options(std::size_t k) {
  AgentOptions o;
  o.hyper = NWHyper::isotropic(2, 1.0, 12.0, 0.05);
  o.k = k;
  o.mutual_inference = false;
  return o;
}

ComponentSet spread(std::size_t k, double gap) {
  ComponentSet phi;
  for (std::size_t i = 0; i < k; ++i) phi.components.push_back({vec(gap * i, 0), SpdMatrix::identity(2)});
  return phi;
}

SyntheticSample separable(std::uint64_t seed, std::size_t d = 60) {
  SyntheticSpec spec;
  spec.k = 3;
  spec.d = d;
  spec.l = 2;
  spec.hyper = NWHyper::isotropic(2, 0.01, 12.0, 0.05);
  spec.seed = seed;
  return synthesize_inter_gmm(spec);
}

GameConfig latent_game(Condition c, int t, std::uint64_t seed, std::size_t d = 60) {
  GameConfig cfg;
  cfg.k = 3;
  cfg.d = d;
  cfg.l = 2;
  cfg.iterations = t;
  cfg.condition = c;
  cfg.mi_enabled = false;
  cfg.hyper = NWHyper::isotropic(2, 0.01, 12.0, 0.05);
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("utter") {
  Agent one = Agent::with_latents(AgentId::A, latent_options(1), {vec(0.3, 0.1), vec(-2, 4)}, 1);
  for (int i = 0; i < 100; ++i) CHECK(one.utter(i % 2) == 0);

  Agent a = Agent::with_latents(AgentId::A, latent_options(3), {vec(8, 0)}, 2);
  AgentProbe::assign_components(a, spread(3, 8.0));
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += a.utter(0) == 1;
  CHECK(hits > 9900);

  // Frequencies follow the normalised sign logits.
  Agent b = Agent::with_latents(AgentId::B, latent_options(3), {vec(1.1, 0.4)}, 3);
  AgentProbe::assign_components(b, spread(3, 1.5));
  auto logits = sign_logits(vec(1.1, 0.4), spread(3, 1.5), MixtureWeights::uniform(3));
  const double lse = log_sum_exp(logits);
  std::vector<int> counts(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[b.utter(0)];
  for (int k = 0; k < 3; ++k) CHECK(std::abs(counts[k] / double(n) - std::exp(logits[k] - lse)) < 0.01);

  CHECK_THROWS_CODE(b.utter(1), ErrorCode::IndexOutOfRange);
}

TEST_CASE("judge") {
  Agent a = Agent::with_latents(AgentId::B, latent_options(2), {vec(0.4, 0.0)}, 4);
  AgentProbe::assign_components(a, spread(2, 2.0));
  AgentProbe::assign_signs(a, {1});
  for (int i = 0; i < 1000; ++i) CHECK(a.judge(0, 1) == 1);

  Agent far = Agent::with_latents(AgentId::B, latent_options(2), {vec(-100, 0)}, 5);
  AgentProbe::assign_components(far, spread(2, 2.0));
  for (int i = 0; i < 1000; ++i) {
    AgentProbe::assign_signs(far, {0});
    CHECK(far.judge(0, 1) == 0);
  }

  const double r = acceptance_probability(vec(0.4, 0.0), spread(2, 2.0), 1, 0);
  int accepted = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    AgentProbe::assign_signs(a, {0});
    accepted += a.judge(0, 1) == 1;
  }
  CHECK(std::abs(accepted / double(n) - r) < 0.005);

  AgentProbe::assign_signs(a, {0});
  CHECK(a.judge(0, 1, AcceptRule::Always) == 1);
  CHECK_THROWS_CODE(a.judge(0, 2), ErrorCode::IndexOutOfRange);
  CHECK_THROWS_CODE(a.judge(3, 0), ErrorCode::IndexOutOfRange);
}

TEST_CASE("mh_communication accounting") {
  Agent sp = Agent::with_latents(AgentId::A, latent_options(2), {vec(0, 0)}, 6);
  Agent li = Agent::with_latents(AgentId::B, latent_options(2), {vec(0, 0)}, 7);
  ComponentSet sharp;
  sharp.components.push_back({vec(0, 0), SpdMatrix::identity(2, 1e6)});
  sharp.components.push_back({vec(50, 0), SpdMatrix::identity(2)});
  AgentProbe::assign_components(sp, sharp);
  AgentProbe::assign_components(li, spread(2, 6.0));
  AgentProbe::assign_signs(li, {1});
  CommStats stats;
  for (int i = 0; i < 500; ++i) {
    const auto before = li.signs();
    mh_communication(sp, li, 0, AcceptRule::MetropolisHastings, &stats);
    int changed = 0;
    for (std::size_t d = 0; d < before.size(); ++d) changed += before[d] != li.signs()[d];
    CHECK(changed <= 1);
  }
  CHECK(stats.proposals == 500);
  CHECK(stats.accepted == 500);
  CHECK(li.signs()[0] == 0);
}

TEST_CASE("learn") {
  Agent a = Agent::with_latents(AgentId::A, latent_options(2), {vec(0, 0), vec(1, 1), vec(5, 5)}, 8);
  const auto z = AgentProbe::latents(a);
  a.learn(Matrix(), MiSchedule{1, 0});
  CHECK(AgentProbe::latents(a) == z);

  RngStream noise(9);
  const int d = 40;
  Matrix imgs(16, d);
  LabelVector truth(d);
  for (int i = 0; i < d; ++i) {
    truth[i] = i % 2;
    for (int p = 0; p < 16; ++p) {
      const bool on = truth[i] == 0 ? p < 8 : p >= 8;
      imgs(p, i) = std::clamp((on ? 0.9 : 0.1) + 0.05 * noise.normal(), 0.0, 1.0);
    }
  }
  AgentOptions opts;
  opts.hyper = NWHyper::isotropic(2, 1.0, 12.0, 0.05);
  opts.k = 2;
  opts.pretrain_iters = 300;
  opts.train.adam.lr = 0.01;
  opts.perceive_mode = PerceiveMode::Mean;
  VaeArch arch;
  arch.input_dim = 16;
  arch.hidden = {16};
  arch.latent_dim = 2;
  auto build = [&] {
    Agent ag = Agent::with_vae(AgentId::A, opts, arch, imgs, 10);
    for (int round = 0; round < 10; ++round) {
      ag.resample_signs();
      ag.learn(imgs, MiSchedule{1, 20});
    }
    ag.resample_signs();
    return ag;
  };
  Agent v1 = build();
  CHECK(adjusted_rand_index(v1.signs(), truth) > 0.9);
  Agent v2 = build();
  CHECK(v1.signs() == v2.signs());
  CHECK(*AgentProbe::vae(v1) == *AgentProbe::vae(v2));

  v1.perceive_all(imgs);
  const auto first = AgentProbe::latents(v1);
  v1.perceive_all(imgs);
  CHECK(AgentProbe::latents(v1) == first);
  CHECK(first.size() == static_cast<std::size_t>(d));
  CHECK(v1.recall(1).size() == 16);
  CHECK_THROWS_CODE(v1.recall(2), ErrorCode::IndexOutOfRange);

  std::stringstream ss;
  v1.save(ss);
  Agent back = Agent::load(ss);
  CHECK(back.signs() == v1.signs());
  CHECK(AgentProbe::components(back) == AgentProbe::components(v1));
  CHECK(back.utter(3) == v1.utter(3));
}

TEST_CASE("run on fixed latents") {
  const auto s = separable(1);
  auto empty = run_latent(latent_game(Condition::Mh, 0, 1), s.z_a, s.z_b, s.w_true);
  CHECK(empty.trace.iterations.empty());

  auto mh = run_latent(latent_game(Condition::Mh, 30, 1), s.z_a, s.z_b, s.w_true);
  const auto& last = mh.trace.iterations.back();
  CHECK(last.kappa > 0.9);
  CHECK(last.ari_a > 0.9);
  CHECK(last.ari_b > 0.9);
  CHECK(last.signs_exchanged == 120);

  auto again = run_latent(latent_game(Condition::Mh, 30, 1), s.z_a, s.z_b, s.w_true);
  CHECK(again.trace.iterations.back().w_a == last.w_a);

  auto one_way = run_latent(latent_game(Condition::MhOneWay, 5, 1), s.z_a, s.z_b, s.w_true);
  CHECK(one_way.trace.iterations.back().signs_exchanged == 60);
  auto silent = run_latent(latent_game(Condition::NoComm, 5, 1), s.z_a, s.z_b, s.w_true);
  CHECK(silent.trace.iterations.back().signs_exchanged == 0);
  auto top = run_latent(latent_game(Condition::GibbsTopline, 5, 1), s.z_a, s.z_b, s.w_true);
  CHECK(top.trace.iterations.back().w_a == top.trace.iterations.back().w_b);
}

TEST_CASE("no communication leaves kappa at chance") {
  double sum = 0;
  const int runs = 60;
  for (int seed = 0; seed < runs; ++seed) {
    const auto s = separable(100 + seed);
    auto res = run_latent(latent_game(Condition::NoComm, 20, seed), s.z_a, s.z_b, s.w_true);
    sum += res.trace.iterations.back().kappa;
  }
  CHECK(std::abs(sum / runs) < 0.2);
}

TEST_CASE("posterior agreement on a symmetric single datum") {
  AgreementInstance inst;
  inst.k = 2;
  inst.hyper = NWHyper::isotropic(2, 1.0, 4.0, 0.5);
  inst.z_a = {vec(0.5, -0.5)};
  inst.z_b = {vec(-1, 0.3)};
  const auto exact = exact_sign_marginals(inst);
  CHECK(exact[0][0] == doctest::Approx(0.5));
  const auto rep = posterior_agreement_suite(inst, Condition::Mh, 20000, 3);
  CHECK(std::abs(rep.empirical_b[0][0] - 0.5) < 0.02);
  CHECK(std::abs(rep.empirical_a[0][0] - 0.5) < 0.02);
}

TEST_CASE("visit order") {
  GameConfig cfg = latent_game(Condition::Mh, 3, 5, 10);
  const auto plain = visit_order(cfg, 1);
  std::vector<std::size_t> iota(10);
  std::iota(iota.begin(), iota.end(), 0);
  CHECK(plain == iota);
  cfg.shuffle_order = true;
  const auto shuffled = visit_order(cfg, 1);
  CHECK(std::set<std::size_t>(shuffled.begin(), shuffled.end()).size() == 10);
  CHECK(shuffled == visit_order(cfg, 1));
  CHECK(shuffled != visit_order(cfg, 2));
}

TEST_CASE("condition names") {
  for (const auto c : {Condition::Mh, Condition::NoComm, Condition::AllAccept, Condition::GibbsTopline,
                       Condition::MhOneWay})
    CHECK(parse_condition(condition_name(c)) == c);
  CHECK_FALSE(parse_condition("telepathy").has_value());
}
