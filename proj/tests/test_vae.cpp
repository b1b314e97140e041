#include <cmath>
#include <functional>
#include <vector>

#include "autodiff.hpp"
#include "gmm.hpp"
#include "support.hpp"
#include "vae.hpp"

using namespace mhng;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, RngStream& rng, double s = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = s * rng.normal();
  return m;
}

Matrix random_spd(Eigen::Index l, RngStream& rng) {
  const Matrix a = random_matrix(l, l, rng);
  return a * a.transpose() + 0.5 * Matrix::Identity(l, l);
}

double spectral_norm(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

VaeArch toy_arch(PixelLikelihood lik = PixelLikelihood::Bernoulli) {
  VaeArch a;
  a.input_dim = 2;
  a.hidden = {3};
  a.latent_dim = 2;
  a.likelihood = lik;
  return a;
}

// Central differences of f with respect to every entry of x, compared with grad.
double fd_error(Matrix& x, const Matrix& grad, const std::function<double()>& f) {
  double worst = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + 1e-5;
    const double up = f();
    x.data()[i] = keep - 1e-5;
    const double down = f();
    x.data()[i] = keep;
    const double num = (up - down) / 2e-5;
    worst = std::max(worst, std::abs(num - grad.data()[i]) / std::max({std::abs(num), std::abs(grad.data()[i]), 1e-6}));
  }
  return worst;
}

}  // namespace

TEST_CASE("autodiff primitives against finite differences") {
  RngStream rng(1);
  Matrix w = random_matrix(3, 4, rng), x = random_matrix(4, 5, rng), b = random_matrix(3, 1, rng);
  Matrix target = random_matrix(3, 5, rng).unaryExpr([](double v) { return v > 0 ? 1.0 : 0.0; });
  auto build = [&](bool grad) {
    auto mk = [&](const Matrix& m) { return grad ? ad::parameter(m) : ad::constant(m); };
    auto tw = mk(w), tx = mk(x), tb = mk(b);
    auto h = ad::add_bias(ad::matmul(tw, tx), tb);
    auto mixed = ad::add(ad::mul(ad::tanh(h), ad::sigmoid(h)), ad::scale(ad::relu(h), 0.3));
    auto loss = ad::add(ad::bernoulli_nll_with_logits(mixed, target), ad::sum(ad::exp(ad::scale(h, 0.1))));
    return std::make_tuple(loss, tw, tx, tb);
  };
  auto [loss, tw, tx, tb] = build(true);
  ad::backward(loss);
  auto value = [&] { return std::get<0>(build(false)).scalar(); };
  CHECK(fd_error(w, tw.grad(), value) < 1e-6);
  CHECK(fd_error(x, tx.grad(), value) < 1e-6);
  CHECK(fd_error(b, tb.grad(), value) < 1e-6);
}

TEST_CASE("encode and decode") {
  const VaeArch arch = toy_arch();
  const VaeParams zero = VaeParams::zeros(arch);
  RngStream rng(2);
  const Matrix x = random_matrix(2, 4, rng).cwiseAbs().cwiseMin(1.0);
  const Encoding e = encode(zero, x);
  CHECK(e.mean.isZero());
  CHECK(e.logvar.isZero());
  CHECK(decode(zero, Matrix::Ones(2, 3)).isZero());

  VaeArch wide;
  wide.input_dim = 6;
  wide.hidden = {8, 5};
  wide.latent_dim = 3;
  const VaeParams p = VaeParams::init(wide, rng);
  const Matrix img = random_matrix(6, 1, rng).cwiseAbs().cwiseMin(1.0);
  CHECK(encode(p, img).mean == encode(p, img).mean);
  const Matrix z = random_matrix(3, 1, rng);
  CHECK(decode(p, z) == decode(p, z));

  // ReLU is 1-Lipschitz, so each head moves by at most the product of spectral norms.
  double enc_norm = spectral_norm(p.enc_mean.weight);
  for (const auto& l : p.encoder) enc_norm *= spectral_norm(l.weight);
  double dec_norm = 1;
  for (const auto& l : p.decoder) dec_norm *= spectral_norm(l.weight);
  for (int n = 0; n < 50; ++n) {
    const Matrix delta = random_matrix(6, 1, rng, 0.01);
    CHECK((encode(p, img + delta).mean - encode(p, img).mean).norm() <= enc_norm * delta.norm() * (1 + 1e-12));
    const Matrix dz = random_matrix(3, 1, rng, 0.01);
    CHECK((decode(p, z + dz) - decode(p, z)).norm() <= dec_norm * dz.norm() * (1 + 1e-12));
  }

  CHECK_THROWS_CODE(encode(p, Matrix::Zero(5, 1)), ErrorCode::ShapeMismatch);
  CHECK_THROWS_CODE(decode(p, Matrix::Zero(2, 1)), ErrorCode::ShapeMismatch);
}

TEST_CASE("reparameterize") {
  RngStream rng(3);
  const Matrix mu = random_matrix(3, 2, rng);
  CHECK((reparameterize(mu, Matrix::Constant(3, 2, -1e6), rng) - mu).cwiseAbs().maxCoeff() < 1e-12);

  const int n = 100000;
  const Matrix z = reparameterize(Matrix::Zero(1, n), Matrix::Zero(1, n), rng);
  const double mean = z.mean();
  const double var = (z.array() - mean).square().sum() / n;
  CHECK(std::abs(var - 1.0) < 0.02);

  RngStream r1(5), r2(5);
  CHECK(reparameterize(mu, Matrix::Zero(3, 2), r1) == reparameterize(mu, Matrix::Zero(3, 2), r2));
}

TEST_CASE("kl_to_full_gaussian") {
  CHECK(kl_to_full_gaussian(Vector::Zero(3), Vector::Zero(3), {Vector::Zero(3), SpdMatrix::identity(3)}) == 0.0);
  CHECK(kl_to_full_gaussian(Vector::Ones(1), Vector::Zero(1), {Vector::Zero(1), SpdMatrix::identity(1)}) ==
        doctest::Approx(0.5).epsilon(1e-14));

  RngStream rng(4);
  const Eigen::Index l = 2;
  const Vector mu_q = random_matrix(l, 1, rng, 0.5);
  const Vector logvar_q = random_matrix(l, 1, rng, 0.3);
  const LatentPrior prior{random_matrix(l, 1, rng, 0.5), SpdMatrix(random_spd(l, rng))};
  const double closed = kl_to_full_gaussian(mu_q, logvar_q, prior);
  const SpdMatrix q_lambda(Matrix((-logvar_q.array()).exp().matrix().asDiagonal()));
  const int n = 1000000;
  double sum = 0, sq = 0;
  for (int s = 0; s < n; ++s) {
    Vector z(l);
    for (Eigen::Index i = 0; i < l; ++i) z(i) = mu_q(i) + std::exp(0.5 * logvar_q(i)) * rng.normal();
    const double v = mvn_logpdf(z, mu_q, q_lambda) - mvn_logpdf(z, prior.mu_p, prior.lambda_p);
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - closed) < 3 * se);

  for (int i = 0; i < 2000; ++i) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.uniform_index(6));
    const LatentPrior p{random_matrix(d, 1, rng), SpdMatrix(random_spd(d, rng))};
    CHECK(kl_to_full_gaussian(random_matrix(d, 1, rng), random_matrix(d, 1, rng), p) >= 0.0);
  }
}

TEST_CASE("elbo gradients match finite differences") {
  for (const auto lik : {PixelLikelihood::Bernoulli, PixelLikelihood::Gaussian}) {
    RngStream rng(6);
    VaeParams p = VaeParams::init(toy_arch(lik), rng);
    Matrix batch(2, 3);
    for (Eigen::Index i = 0; i < batch.size(); ++i) batch.data()[i] = rng.uniform();
    std::vector<LatentPrior> priors;
    for (int i = 0; i < 3; ++i) priors.push_back({random_matrix(2, 1, rng, 0.5), SpdMatrix(random_spd(2, rng))});
    const RngStream noise(9);
    RngStream r0 = noise;
    ElboResult analytic = elbo_loss(p, batch, priors, r0);
    auto loss = [&] {
      RngStream r = noise;
      return elbo_loss(p, batch, priors, r).loss;
    };
    auto pw = p.weights();
    auto gw = analytic.grads.weights();
    for (std::size_t i = 0; i < pw.size(); ++i) CHECK(fd_error(*pw[i], *gw[i], loss) < 1e-3);
    auto pb = p.biases();
    auto gb = analytic.grads.biases();
    for (std::size_t i = 0; i < pb.size(); ++i) {
      Matrix b = *pb[i];
      const Matrix g = *gb[i];
      auto f = [&] {
        *pb[i] = b;
        return loss();
      };
      CHECK(fd_error(b, g, f) < 1e-3);
      *pb[i] = b;
    }
  }
}

TEST_CASE("elbo structure") {
  RngStream rng(7);
  VaeParams p = VaeParams::init(toy_arch(), rng);
  Matrix batch(2, 4);
  for (Eigen::Index i = 0; i < batch.size(); ++i) batch.data()[i] = rng.uniform();

  // Encoder pinned to N(0, I) and a standard normal prior: the KL vanishes.
  for (auto& l : p.encoder) l.weight.setZero();
  p.enc_mean.weight.setZero();
  p.enc_mean.bias.setZero();
  p.enc_logvar.weight.setZero();
  p.enc_logvar.bias.setZero();
  const std::vector<LatentPrior> std_normal(4, {Vector::Zero(2), SpdMatrix::identity(2)});
  RngStream r(1);
  const ElboResult pinned = elbo_loss(p, batch, std_normal, r);
  CHECK(pinned.kl == 0.0);
  CHECK(pinned.loss == doctest::Approx(pinned.reconstruction).epsilon(1e-14));

  // Near-deterministic encoder: duplicating the batch doubles the loss.
  VaeParams q = VaeParams::init(toy_arch(), rng);
  q.enc_logvar.weight.setZero();
  q.enc_logvar.bias.setConstant(-60.0);
  std::vector<LatentPrior> priors;
  for (int i = 0; i < 4; ++i) priors.push_back({random_matrix(2, 1, rng, 0.5), SpdMatrix(random_spd(2, rng))});
  Matrix twice(2, 8);
  twice << batch, batch;
  std::vector<LatentPrior> priors2 = priors;
  priors2.insert(priors2.end(), priors.begin(), priors.end());
  RngStream r1(2), r2(3);
  const double single = elbo_loss(q, batch, priors, r1).loss;
  const double doubled = elbo_loss(q, twice, priors2, r2).loss;
  CHECK(doubled == doctest::Approx(2 * single).epsilon(1e-9));
}

TEST_CASE("train") {
  RngStream rng(8);
  VaeArch arch;
  arch.input_dim = 16;
  arch.hidden = {32};
  arch.latent_dim = 2;
  const VaeParams init = VaeParams::init(arch, rng);
  // Eight binary 4x4 patterns.
  Matrix data(16, 8);
  for (int c = 0; c < 8; ++c)
    for (int i = 0; i < 16; ++i) data(i, c) = ((i * (c + 3) + c) % 5) < 2 ? 1.0 : 0.0;
  ComponentSet phi;
  phi.components.push_back({Vector::Zero(2), SpdMatrix::identity(2)});
  const SignVector signs(8, 0);
  TrainConfig cfg;
  cfg.adam.lr = 0.01;

  VaeParams same = init;
  RngStream r0(1);
  train(same, data, signs, phi, 0, cfg, r0);
  CHECK(same == init);

  auto recon = [&](const VaeParams& p) {
    RngStream r(123);
    const std::vector<LatentPrior> pri(8, {Vector::Zero(2), SpdMatrix::identity(2)});
    double total = 0;
    for (int rep = 0; rep < 20; ++rep) total += elbo_loss(p, data, pri, r).reconstruction;
    return total / 20;
  };
  VaeParams a = init, b = init;
  RngStream ra(5), rb(5);
  train(a, data, signs, phi, 500, cfg, ra);
  train(b, data, signs, phi, 500, cfg, rb);
  CHECK(a == b);
  CHECK(recon(a) <= 0.5 * recon(init));

  VaeParams broken = init;
  broken.decoder.back().bias(0) = std::nan("");
  RngStream rn(1);
  CHECK_THROWS_CODE(train(broken, data, signs, phi, 3, cfg, rn), ErrorCode::NumericalFailure);
}

TEST_CASE("perceive") {
  RngStream rng(9);
  VaeArch arch = toy_arch();
  VaeParams p = VaeParams::init(arch, rng);
  const Vector img = (Vector(2) << 0.2, 0.9).finished();
  CHECK(perceive(p, img, rng, PerceiveMode::Mean) == perceive(p, img, rng, PerceiveMode::Mean));

  const Encoding e = encode(p, img);
  const int n = 100000;
  Vector sum = Vector::Zero(2), sq = Vector::Zero(2);
  for (int i = 0; i < n; ++i) {
    const Vector z = perceive(p, img, rng, PerceiveMode::Sample);
    sum += z;
    sq += z.cwiseProduct(z);
  }
  const Vector mean = sum / n;
  const Vector var = sq / n - mean.cwiseProduct(mean);
  for (int i = 0; i < 2; ++i) CHECK(var(i) == doctest::Approx(std::exp(e.logvar(i))).epsilon(0.02));

  p.enc_logvar.weight.setZero();
  p.enc_logvar.bias.setConstant(-80.0);
  CHECK((perceive(p, img, rng, PerceiveMode::Sample) - perceive(p, img, rng, PerceiveMode::Mean)).norm() < 1e-12);
}

TEST_CASE("recall_image") {
  VaeArch arch = toy_arch();
  arch.input_dim = 9;
  RngStream rng(10);
  VaeParams p = VaeParams::init(arch, rng);
  ComponentSet phi;
  phi.components.push_back({Vector::Zero(2), SpdMatrix::identity(2)});
  phi.components.push_back({Vector::Ones(2), SpdMatrix::identity(2)});
  CHECK(recall_image(p, phi, 1) == recall_image(p, phi, 1));
  const Vector r = recall_image(p, phi, 0);
  CHECK(r.minCoeff() >= 0.0);
  CHECK(r.maxCoeff() <= 1.0);

  for (auto& l : p.decoder) {
    l.weight.setZero();
    l.bias.setZero();
  }
  CHECK((recall_image(p, phi, 1).array() - 0.5).abs().maxCoeff() == 0.0);
  CHECK_THROWS_CODE(recall_image(p, phi, 2), ErrorCode::IndexOutOfRange);
}

TEST_CASE("vae checkpoint round trip") {
  RngStream rng(11);
  const VaeParams p = VaeParams::init(toy_arch(), rng);
  std::stringstream ss;
  save_vae(ss, p);
  CHECK(load_vae(ss) == p);
}
