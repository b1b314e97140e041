#pragma once

#include <span>
#include <utility>

#include <Eigen/Dense>

#include "rng.hpp"

namespace mhng {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Lower Cholesky factor of a symmetric matrix. Retries with jitter
/// 1e-10, 1e-8, 1e-6 on the diagonal before throwing NotPositiveDefinite.
Matrix cholesky(const Matrix& m);

/// Symmetric positive definite matrix with its Cholesky factor cached at
/// construction.
class SpdMatrix {
 public:
  SpdMatrix() = default;
  explicit SpdMatrix(Matrix data);
  static SpdMatrix identity(Eigen::Index dim, double scale = 1.0);

  Eigen::Index dim() const noexcept { return data_.rows(); }
  const Matrix& data() const noexcept { return data_; }
  const Matrix& chol() const noexcept { return chol_; }
  /// log det from the cached factor.
  double log_det() const;
  Matrix inverse() const;

  bool operator==(const SpdMatrix& other) const { return data_ == other.data_; }

 private:
  Matrix data_;
  Matrix chol_;
};

/// Normal-Wishart hyperparameters. The Wishart uses the scale convention,
/// E[Lambda] = nu * beta.
struct NWHyper {
  Vector m;
  double alpha = 1.0;
  double nu = 12.0;
  SpdMatrix beta;

  Eigen::Index dim() const noexcept { return m.size(); }
  void validate() const;

  /// m = 0, beta = beta_scale * I.
  static NWHyper isotropic(Eigen::Index dim, double alpha, double nu, double beta_scale);
};

double mvn_logpdf(const Vector& x, const Vector& mean, const SpdMatrix& precision);

Vector sample_mvn(const Vector& mean, const SpdMatrix& precision, RngStream& rng);

/// Bartlett decomposition.
SpdMatrix sample_wishart(double nu, const SpdMatrix& scale, RngStream& rng);

std::pair<Vector, SpdMatrix> sample_normal_wishart(const NWHyper& h, RngStream& rng);

double log_sum_exp(std::span<const double> values);

std::size_t sample_categorical_log(std::span<const double> log_weights, RngStream& rng);

}  // namespace mhng
