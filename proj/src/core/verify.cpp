#include "verify.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "gmm.hpp"
#include "metrics.hpp"
#include "vae.hpp"

namespace mhng {

namespace {

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

CheckResult upper_bound(std::string name, double value, double threshold, std::string detail = {}) {
  return {std::move(name), value < threshold, value, threshold, std::move(detail)};
}

SpdMatrix random_spd(Eigen::Index l, RngStream& rng) {
  Matrix a(l, l);
  for (Eigen::Index i = 0; i < l; ++i) {
    for (Eigen::Index j = 0; j < l; ++j) a(i, j) = rng.normal();
  }
  return SpdMatrix(a * a.transpose() + 0.5 * Matrix::Identity(l, l));
}

Vector random_vector(Eigen::Index l, RngStream& rng, double scale = 1.0) {
  Vector v(l);
  for (Eigen::Index i = 0; i < l; ++i) v(i) = scale * rng.normal();
  return v;
}

/// Gaussian log-density from an LU determinant and a plain quadratic form.
double dense_log_normal(const Vector& z, const Vector& mu, const Matrix& lambda) {
  const Vector diff = z - mu;
  const double quad = diff.dot(lambda * diff);
  const double det = lambda.partialPivLu().determinant();
  return 0.5 * std::log(det) - 0.5 * quad - 0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi);
}

/// The full MH ratio: target P(w | z_sp, z_li, phi_sp, phi_li) over proposal
/// P(w | z_sp, phi_sp), both normalised over K with mixture weights pi.
double dense_acceptance(const Vector& z_sp, const ComponentSet& phi_sp, const Vector& z_li, const ComponentSet& phi_li,
                        const std::vector<double>& pi, Sign proposed, Sign current) {
  const std::size_t k = pi.size();
  std::vector<double> log_target(k), log_proposal(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& a = phi_sp.components[i];
    const auto& b = phi_li.components[i];
    const double sp = dense_log_normal(z_sp, a.mu, a.lambda.data());
    log_proposal[i] = std::log(pi[i]) + sp;
    log_target[i] = log_proposal[i] + dense_log_normal(z_li, b.mu, b.lambda.data());
  }
  auto normalise = [](std::vector<double>& v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double s = 0;
    for (const double x : v) s += std::exp(x - mx);
    const double lz = mx + std::log(s);
    for (double& x : v) x -= lz;
  };
  normalise(log_target);
  normalise(log_proposal);
  const auto p = static_cast<std::size_t>(proposed), c = static_cast<std::size_t>(current);
  const double log_r = log_target[p] + log_proposal[c] - log_target[c] - log_proposal[p];
  return std::min(1.0, std::exp(log_r));
}

CheckResult check_agreement(Condition condition, const VerifyOptions& opts) {
  const auto report =
      posterior_agreement_suite(reference_agreement_instance(), condition, opts.sweeps, opts.seed + 11);
  const std::string name = condition == Condition::MhOneWay ? "posterior_agreement_one_way" : "posterior_agreement_mh";
  return upper_bound(name, report.max_tv, 0.05,
                     "max per-object TV over " + std::to_string(report.sweeps) +
                         " sweeps; co-assignment diagnostic " + fixed(report.max_coassignment_error));
}

std::vector<CheckResult> check_acceptance(const VerifyOptions& opts) {
  RngStream rng(derive_seed(opts.seed, 21));
  double worst = 0.0;
  double worst_pi = 0.0;
  for (int n = 0; n < opts.acceptance_instances; ++n) {
    const Eigen::Index l = 1 + static_cast<Eigen::Index>(rng.uniform_index(6));
    const std::size_t k = 2 + rng.uniform_index(5);
    ComponentSet sp, li;
    for (std::size_t i = 0; i < k; ++i) {
      sp.components.push_back({random_vector(l, rng), random_spd(l, rng)});
      li.components.push_back({random_vector(l, rng), random_spd(l, rng)});
    }
    const Vector z_sp = random_vector(l, rng, 1.5);
    const Vector z_li = random_vector(l, rng, 1.5);
    std::vector<double> pi(k), pi2(k);
    for (std::size_t i = 0; i < k; ++i) {
      pi[i] = 0.05 + rng.uniform();
      pi2[i] = 0.05 + rng.uniform();
    }
    const auto proposed = static_cast<Sign>(rng.uniform_index(k));
    const auto current = static_cast<Sign>(rng.uniform_index(k));
    const double got = acceptance_probability(z_li, li, proposed, current);
    const double want = dense_acceptance(z_sp, sp, z_li, li, pi, proposed, current);
    const double want2 = dense_acceptance(z_sp, sp, z_li, li, pi2, proposed, current);
    const double scale = std::max(std::abs(want), 1e-300);
    worst = std::max(worst, std::abs(got - want) / scale);
    worst_pi = std::max(worst_pi, std::abs(want2 - want) / scale);
  }
  std::vector<CheckResult> out;
  out.push_back(upper_bound("acceptance_dense_oracle", worst, 1e-10,
                            std::to_string(opts.acceptance_instances) + " random instances, max relative error"));
  out.push_back(upper_bound("acceptance_pi_invariance", worst_pi, 1e-10,
                            "full ratio under two unrelated mixture weightings"));

  // Sign draws use log-weights; shifting them by a constant must not move a single draw.
  RngStream base(derive_seed(opts.seed, 22));
  ComponentSet phi;
  for (int i = 0; i < 4; ++i) phi.components.push_back({random_vector(3, base), random_spd(3, base)});
  MixtureWeights pi = MixtureWeights::uniform(4);
  MixtureWeights scaled = pi;
  scaled.log_pi.array() += std::log(37.5);
  RngStream r1(derive_seed(opts.seed, 23)), r2 = r1;
  int mismatches = 0;
  for (int n = 0; n < 2000; ++n) {
    const Vector z = random_vector(3, base, 1.5);
    if (sample_sign(z, phi, pi, r1) != sample_sign(z, phi, scaled, r2)) ++mismatches;
  }
  out.push_back({"sign_draw_weight_rescaling", mismatches == 0, static_cast<double>(mismatches), 0.0,
                 "identical draws under shared seed after scaling pi by 37.5"});
  return out;
}

CheckResult check_occupancy(const VerifyOptions& opts) {
  RngStream rng(derive_seed(opts.seed, 31));
  const NWHyper hyper = NWHyper::isotropic(2, 1.0, 4.0, 0.5);
  AgentOptions ao;
  ao.hyper = hyper;
  ao.k = 2;
  ao.mutual_inference = false;
  const Vector z_a = (Vector(2) << 0.3, -0.2).finished();
  const Vector z_b = (Vector(2) << -0.4, 0.5).finished();
  Agent a = Agent::with_latents(AgentId::A, ao, {z_a}, derive_seed(opts.seed, 32));
  Agent b = Agent::with_latents(AgentId::B, ao, {z_b}, derive_seed(opts.seed, 33));
  ComponentSet pa, pb;
  pa.components = {{(Vector(2) << 0.0, 0.0).finished(), SpdMatrix::identity(2, 1.5)},
                   {(Vector(2) << 1.0, -1.0).finished(), SpdMatrix::identity(2, 0.7)}};
  pb.components = {{(Vector(2) << 0.5, 0.5).finished(), SpdMatrix::identity(2, 2.0)},
                   {(Vector(2) << -1.0, 0.5).finished(), SpdMatrix::identity(2, 1.0)}};
  AgentProbe::assign_components(a, pa);
  AgentProbe::assign_components(b, pb);

  std::vector<double> exact(2);
  for (std::size_t k = 0; k < 2; ++k) {
    exact[k] = std::exp(dense_log_normal(z_a, pa.components[k].mu, pa.components[k].lambda.data()) +
                        dense_log_normal(z_b, pb.components[k].mu, pb.components[k].lambda.data()));
  }
  const double norm = exact[0] + exact[1];
  for (double& e : exact) e /= norm;

  std::vector<double> count_a(2, 0.0), count_b(2, 0.0);
  for (long s = 0; s < opts.occupancy_steps; ++s) {
    b.judge(0, a.utter(0));
    count_b[static_cast<std::size_t>(b.signs()[0])] += 1.0;
    a.judge(0, b.utter(0));
    count_a[static_cast<std::size_t>(a.signs()[0])] += 1.0;
  }
  const auto n = static_cast<double>(opts.occupancy_steps);
  double tv = 0.0;
  for (const auto* c : {&count_a, &count_b}) {
    tv = std::max(tv, 0.5 * (std::abs((*c)[0] / n - exact[0]) + std::abs((*c)[1] / n - exact[1])));
  }
  return upper_bound("detailed_balance_occupancy", tv, 0.02,
                     "D=1 K=2 fixed parameters, exact P(w=0)=" + fixed(exact[0]));
}

double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / scale;
}

double gradient_error(PixelLikelihood likelihood, const VerifyOptions& opts) {
  RngStream rng(derive_seed(opts.seed, 41 + static_cast<int>(likelihood)));
  VaeArch arch;
  arch.input_dim = 2;
  arch.hidden = {3};
  arch.latent_dim = 2;
  arch.likelihood = likelihood;
  VaeParams p = VaeParams::init(arch, rng);
  Matrix batch(2, 3);
  for (Eigen::Index i = 0; i < batch.size(); ++i) batch.data()[i] = rng.uniform();
  std::vector<LatentPrior> priors;
  for (int i = 0; i < 3; ++i) priors.push_back({random_vector(2, rng, 0.5), random_spd(2, rng)});
  const RngStream noise(derive_seed(opts.seed, 49));

  RngStream r0 = noise;
  const auto analytic = elbo_loss(p, batch, priors, r0);
  auto loss_at = [&]() {
    RngStream r = noise;
    return elbo_loss(p, batch, priors, r).loss;
  };
  constexpr double h = 1e-4;
  double worst = 0.0;
  auto probe = [&](double* value, double grad) {
    const double keep = *value;
    *value = keep + h;
    const double up = loss_at();
    *value = keep - h;
    const double down = loss_at();
    *value = keep;
    worst = std::max(worst, rel_err(grad, (up - down) / (2 * h)));
  };
  auto pw = p.weights();
  auto gw = const_cast<VaeParams&>(analytic.grads).weights();
  for (std::size_t i = 0; i < pw.size(); ++i) {
    for (Eigen::Index j = 0; j < pw[i]->size(); ++j) probe(pw[i]->data() + j, gw[i]->data()[j]);
  }
  auto pb = p.biases();
  auto gb = const_cast<VaeParams&>(analytic.grads).biases();
  for (std::size_t i = 0; i < pb.size(); ++i) {
    for (Eigen::Index j = 0; j < pb[i]->size(); ++j) probe(pb[i]->data() + j, gb[i]->data()[j]);
  }
  return worst;
}

std::vector<CheckResult> check_vae(const VerifyOptions& opts) {
  std::vector<CheckResult> out;
  out.push_back(upper_bound("gradient_fd_bernoulli", gradient_error(PixelLikelihood::Bernoulli, opts), 1e-3,
                            "central differences h=1e-4, max relative error"));
  out.push_back(upper_bound("gradient_fd_gaussian", gradient_error(PixelLikelihood::Gaussian, opts), 1e-3,
                            "central differences h=1e-4, max relative error"));

  RngStream rng(derive_seed(opts.seed, 51));
  double most_negative = 0.0;
  for (int n = 0; n < opts.kl_instances; ++n) {
    const Eigen::Index l = 1 + static_cast<Eigen::Index>(rng.uniform_index(8));
    const LatentPrior prior{random_vector(l, rng), random_spd(l, rng)};
    const double kl = kl_to_full_gaussian(random_vector(l, rng), random_vector(l, rng), prior);
    most_negative = std::min(most_negative, kl);
  }
  out.push_back({"kl_non_negative", most_negative >= 0.0, most_negative, 0.0,
                 std::to_string(opts.kl_instances) + " random SPD priors, smallest KL"});

  // Monte Carlo estimate of E_q[log q(z) - log p(z)].
  const Eigen::Index l = 3;
  const Vector mu_q = random_vector(l, rng, 0.5);
  const Vector logvar_q = random_vector(l, rng, 0.3);
  const LatentPrior prior{random_vector(l, rng, 0.5), random_spd(l, rng)};
  const double closed = kl_to_full_gaussian(mu_q, logvar_q, prior);
  const Matrix q_prec = (-logvar_q.array()).exp().matrix().asDiagonal();
  const SpdMatrix q_lambda(q_prec);
  constexpr int samples = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int s = 0; s < samples; ++s) {
    Vector z(l);
    for (Eigen::Index i = 0; i < l; ++i) z(i) = mu_q(i) + std::exp(0.5 * logvar_q(i)) * rng.normal();
    const double v = mvn_logpdf(z, mu_q, q_lambda) - mvn_logpdf(z, prior.mu_p, prior.lambda_p);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / samples;
  const double se = std::sqrt((sum_sq / samples - mean * mean) / samples);
  out.push_back(upper_bound("kl_monte_carlo", std::abs(mean - closed) / se, 3.0,
                            "closed form " + fixed(closed, 6) + " vs MC " + fixed(mean, 6) + ", in standard errors"));
  return out;
}

double pair_count_ari(const LabelVector& a, const LabelVector& b) {
  const std::size_t n = a.size();
  double both = 0, in_a = 0, in_b = 0, pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      both += sa && sb;
      in_a += sa;
      in_b += sb;
      pairs += 1;
    }
  }
  const double expected = in_a * in_b / pairs;
  const double max_index = 0.5 * (in_a + in_b);
  if (max_index == expected) return 1.0;
  return (both - expected) / (max_index - expected);
}

std::vector<CheckResult> check_metrics(const VerifyOptions& opts) {
  std::vector<CheckResult> out;
  const LabelVector x{0, 0, 1, 1};
  double err = 0.0;
  err = std::max(err, std::abs(adjusted_rand_index(x, x) - 1.0));
  err = std::max(err, std::abs(adjusted_rand_index(x, {1, 1, 0, 0}) - 1.0));
  err = std::max(err, std::abs(adjusted_rand_index(x, {0, 1, 0, 1}) - pair_count_ari(x, {0, 1, 0, 1})));
  RngStream rng(derive_seed(opts.seed, 61));
  for (int n = 0; n < 200; ++n) {
    const std::size_t len = 2 + rng.uniform_index(30);
    LabelVector a(len), b(len);
    for (std::size_t i = 0; i < len; ++i) {
      a[i] = static_cast<int>(rng.uniform_index(4));
      b[i] = static_cast<int>(rng.uniform_index(5));
    }
    err = std::max(err, std::abs(adjusted_rand_index(a, b) - pair_count_ari(a, b)));
  }
  out.push_back(upper_bound("ari_pair_counting", err, 1e-12, "listed examples plus 200 random pairs"));

  const double kappa = cohen_kappa({0, 0, 1, 1}, {0, 1, 1, 1});
  const double kappa_same = cohen_kappa({0, 1, 0, 1}, {0, 1, 0, 1});
  const double kerr = std::max(std::abs(kappa - 0.5), std::abs(kappa_same - 1.0));
  out.push_back(upper_bound("kappa_hand_values", kerr, 1e-12, "C_o=0.75, C_e=0.5 gives 0.5"));

  struct Band {
    double k;
    const char* label;
  };
  const Band bands[] = {{1.0, "almost perfect"}, {0.91, "almost perfect"}, {0.80, "substantial"},
                        {0.61, "substantial"},   {0.60, "moderate"},       {0.40, "fair"},
                        {0.20, "slight"},        {0.01, "slight"},         {0.0, "no agreement"},
                        {-0.1, "no agreement"}};
  int wrong = 0;
  for (const auto& b : bands) wrong += kappa_band(b.k) != b.label;
  out.push_back({"kappa_band_boundaries", wrong == 0, static_cast<double>(wrong), 0.0, "half-open bands"});
  return out;
}

}  // namespace

AgreementInstance reference_agreement_instance() {
  AgreementInstance inst;
  inst.k = 2;
  inst.hyper = NWHyper::isotropic(2, 1.0, 4.0, 0.5);
  const double za[6][2] = {{1.0, 0.8}, {1.2, 1.1}, {0.9, 1.3}, {-1.0, -0.7}, {-1.3, -1.1}, {0.1, -0.2}};
  const double zb[6][2] = {{0.7, -1.0}, {1.1, -0.8}, {-0.2, 0.3}, {-0.9, 1.2}, {-1.1, 0.9}, {-0.6, 1.0}};
  for (int d = 0; d < 6; ++d) {
    inst.z_a.push_back((Vector(2) << za[d][0], za[d][1]).finished());
    inst.z_b.push_back((Vector(2) << zb[d][0], zb[d][1]).finished());
  }
  return inst;
}

std::vector<CheckResult> run_verify(const VerifyOptions& opts, const std::function<void(const CheckResult&)>& on_check) {
  struct FaultGuard {
    explicit FaultGuard(bool on) { fault::set_flip_acceptance(on); }
    ~FaultGuard() { fault::set_flip_acceptance(false); }
  } guard(opts.flip_acceptance);

  std::vector<CheckResult> results;
  auto add = [&](CheckResult r) {
    if (on_check) on_check(r);
    results.push_back(std::move(r));
  };
  add(check_agreement(Condition::Mh, opts));
  add(check_agreement(Condition::MhOneWay, opts));
  for (auto& r : check_acceptance(opts)) add(std::move(r));
  add(check_occupancy(opts));
  for (auto& r : check_vae(opts)) add(std::move(r));
  for (auto& r : check_metrics(opts)) add(std::move(r));
  return results;
}

}  // namespace mhng
