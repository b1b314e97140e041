#pragma once

#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

namespace mhng::ad {

using Matrix = Eigen::MatrixXd;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Propagates this node's grad into its inputs' grads.
  std::function<void(Node&)> backward;
};

/// Handle to a node of a dynamically built expression graph. Values are
/// column-major matrices; a batch is laid out one datum per column.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  double scalar() const { return node_->value(0, 0); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Leaf whose gradient is accumulated by backward().
Tensor parameter(Matrix value);
Tensor constant(Matrix value);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
/// a (r x n) + bias (r x 1) broadcast over columns.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sum(const Tensor& a);

/// Sum over all entries of the Bernoulli negative log-likelihood of
/// target given logits.
Tensor bernoulli_nll_with_logits(const Tensor& logits, const Matrix& target);
/// Sum of unit-variance Gaussian negative log-likelihoods.
Tensor gaussian_nll_unit(const Tensor& mean, const Matrix& target);

struct GaussianPrior {
  Eigen::VectorXd mean;
  Matrix precision;
  double log_det_precision = 0.0;
};

/// Sum over columns of KL(N(mu_q, diag exp(logvar_q)) || N(mean_n, precision_n^{-1})).
/// prior_index[n] selects the prior for column n.
Tensor kl_diag_to_full(const Tensor& mu_q, const Tensor& logvar_q, const std::vector<GaussianPrior>& priors,
                       const std::vector<std::size_t>& prior_index);

/// Reverse pass from a 1x1 root; gradients of parameters are overwritten.
void backward(const Tensor& root);

}  // namespace mhng::ad
