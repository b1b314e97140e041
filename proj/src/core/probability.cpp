#include "probability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "error.hpp"

namespace mhng {

namespace {

constexpr double kJitter[] = {0.0, 1e-10, 1e-8, 1e-6};

bool is_symmetric(const Matrix& m) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale;
}

}  // namespace

Matrix cholesky(const Matrix& m) {
  if (m.rows() != m.cols()) throw Error(ErrorCode::DimensionMismatch, "cholesky of non-square matrix");
  if (!is_symmetric(m)) throw Error(ErrorCode::NotPositiveDefinite, "matrix is not symmetric");
  const auto id = Matrix::Identity(m.rows(), m.cols());
  for (const double delta : kJitter) {
    Eigen::LLT<Matrix> llt(m + delta * id);
    if (llt.info() == Eigen::Success) {
      Matrix l = llt.matrixL();
      if (l.allFinite()) return l;
    }
  }
  throw Error(ErrorCode::NotPositiveDefinite, "Cholesky failed after jitter escalation to 1e-6");
}

SpdMatrix::SpdMatrix(Matrix data) : data_(std::move(data)), chol_(cholesky(data_)) {}

SpdMatrix SpdMatrix::identity(Eigen::Index dim, double scale) {
  return SpdMatrix(scale * Matrix::Identity(dim, dim));
}

double SpdMatrix::log_det() const { return 2.0 * chol_.diagonal().array().log().sum(); }

Matrix SpdMatrix::inverse() const {
  Matrix inv = Matrix::Identity(dim(), dim());
  chol_.triangularView<Eigen::Lower>().solveInPlace(inv);
  return inv.transpose() * inv;
}

void NWHyper::validate() const {
  const auto l = static_cast<double>(m.size());
  if (m.size() == 0) throw Error(ErrorCode::DimensionMismatch, "empty prior mean");
  if (beta.dim() != m.size()) throw Error(ErrorCode::DimensionMismatch, "beta dim != m dim");
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidConfig, "alpha must be > 0");
  if (!(nu > l - 1.0)) throw Error(ErrorCode::InvalidDof, "nu must exceed L - 1");
}

NWHyper NWHyper::isotropic(Eigen::Index dim, double alpha, double nu, double beta_scale) {
  NWHyper h{Vector::Zero(dim), alpha, nu, SpdMatrix::identity(dim, beta_scale)};
  h.validate();
  return h;
}

double mvn_logpdf(const Vector& x, const Vector& mean, const SpdMatrix& precision) {
  if (x.size() != mean.size() || x.size() != precision.dim()) {
    std::ostringstream msg;
    msg << "x:" << x.size() << " mean:" << mean.size() << " precision:" << precision.dim();
    throw Error(ErrorCode::DimensionMismatch, msg.str());
  }
  const auto l = static_cast<double>(x.size());
  // (x - mu)^T Lambda (x - mu) = |L^T (x - mu)|^2 with Lambda = L L^T.
  const Vector y = precision.chol().transpose().triangularView<Eigen::Upper>() * (x - mean);
  return 0.5 * precision.log_det() - 0.5 * l * std::log(2.0 * std::numbers::pi) - 0.5 * y.squaredNorm();
}

Vector sample_mvn(const Vector& mean, const SpdMatrix& precision, RngStream& rng) {
  if (mean.size() != precision.dim()) throw Error(ErrorCode::DimensionMismatch, "sample_mvn");
  Vector eps(mean.size());
  for (auto& e : eps) e = rng.normal();
  // Solve L^T y = eps so that Cov(y) = (L L^T)^{-1}.
  precision.chol().transpose().triangularView<Eigen::Upper>().solveInPlace(eps);
  return mean + eps;
}

SpdMatrix sample_wishart(double nu, const SpdMatrix& scale, RngStream& rng) {
  const Eigen::Index l = scale.dim();
  if (!(nu > static_cast<double>(l) - 1.0)) {
    throw Error(ErrorCode::InvalidDof, "Wishart dof " + std::to_string(nu) + " <= L - 1");
  }
  Matrix a = Matrix::Zero(l, l);
  for (Eigen::Index i = 0; i < l; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(nu - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Matrix ca = scale.chol().triangularView<Eigen::Lower>() * a;
  Matrix w = ca * ca.transpose();
  w = 0.5 * (w + w.transpose());
  return SpdMatrix(std::move(w));
}

std::pair<Vector, SpdMatrix> sample_normal_wishart(const NWHyper& h, RngStream& rng) {
  h.validate();
  SpdMatrix lambda = sample_wishart(h.nu, h.beta, rng);
  SpdMatrix scaled(h.alpha * lambda.data());
  Vector mu = sample_mvn(h.m, scaled, rng);
  return {std::move(mu), std::move(lambda)};
}

double log_sum_exp(std::span<const double> values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (const double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (const double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

std::size_t sample_categorical_log(std::span<const double> log_weights, RngStream& rng) {
  if (log_weights.empty()) throw Error(ErrorCode::AllNegInfinity, "empty weight vector");
  const double lse = log_sum_exp(log_weights);
  if (!std::isfinite(lse)) throw Error(ErrorCode::AllNegInfinity, "no finite log weight");
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < log_weights.size(); ++k) {
    const double p = std::exp(log_weights[k] - lse);
    if (p > 0.0) last_positive = k;
    cum += p;
    if (u < cum) return k;
  }
  return last_positive;
}

}  // namespace mhng
