#include "autodiff.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

#include "error.hpp"

namespace mhng::ad {

namespace {

Tensor make(Matrix value, std::vector<std::shared_ptr<Node>> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& in : inputs) node->requires_grad = node->requires_grad || in->requires_grad;
  if (node->requires_grad) {
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void accumulate(Node& n, const Matrix& g) {
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": operand shapes differ");
  }
}

}  // namespace

Tensor parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

Tensor constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw Error(ErrorCode::ShapeMismatch, "matmul inner dimensions differ");
  Matrix v = a.value() * b.value();
  auto an = a.node(), bn = b.node();
  return make(std::move(v), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) accumulate(*an, self.grad * bn->value.transpose());
    if (bn->requires_grad) accumulate(*bn, an->value.transpose() * self.grad);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto an = a.node(), bn = b.node();
  return make(a.value() + b.value(), {an, bn}, [an, bn](Node& self) {
    accumulate(*an, self.grad);
    accumulate(*bn, self.grad);
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (bias.cols() != 1 || bias.rows() != a.rows()) throw Error(ErrorCode::ShapeMismatch, "add_bias");
  Matrix v = a.value().colwise() + bias.value().col(0);
  auto an = a.node(), bn = bias.node();
  return make(std::move(v), {an, bn}, [an, bn](Node& self) {
    accumulate(*an, self.grad);
    if (bn->requires_grad) accumulate(*bn, self.grad.rowwise().sum());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto an = a.node(), bn = b.node();
  return make(a.value().cwiseProduct(b.value()), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) accumulate(*an, self.grad.cwiseProduct(bn->value));
    if (bn->requires_grad) accumulate(*bn, self.grad.cwiseProduct(an->value));
  });
}

Tensor scale(const Tensor& a, double s) {
  auto an = a.node();
  return make(s * a.value(), {an}, [an, s](Node& self) { accumulate(*an, s * self.grad); });
}

Tensor relu(const Tensor& a) {
  auto an = a.node();
  return make(a.value().cwiseMax(0.0), {an}, [an](Node& self) {
    accumulate(*an, (an->value.array() > 0.0).cast<double>().matrix().cwiseProduct(self.grad));
  });
}

Tensor tanh(const Tensor& a) {
  auto an = a.node();
  Matrix v = a.value().array().tanh().matrix();
  return make(v, {an}, [an](Node& self) {
    accumulate(*an, ((1.0 - self.value.array().square()) * self.grad.array()).matrix());
  });
}

Tensor sigmoid(const Tensor& a) {
  auto an = a.node();
  Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return make(std::move(v), {an}, [an](Node& self) {
    accumulate(*an, (self.value.array() * (1.0 - self.value.array()) * self.grad.array()).matrix());
  });
}

Tensor exp(const Tensor& a) {
  auto an = a.node();
  return make(a.value().array().exp().matrix(), {an}, [an](Node& self) {
    accumulate(*an, self.value.cwiseProduct(self.grad));
  });
}

Tensor sum(const Tensor& a) {
  auto an = a.node();
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return make(std::move(v), {an}, [an](Node& self) {
    accumulate(*an, Matrix::Constant(an->value.rows(), an->value.cols(), self.grad(0, 0)));
  });
}

Tensor bernoulli_nll_with_logits(const Tensor& logits, const Matrix& target) {
  if (logits.rows() != target.rows() || logits.cols() != target.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "bernoulli_nll target shape");
  }
  const auto x = logits.value().array();
  // softplus(x) - t x, written to stay finite for large |x|.
  const double total = (x.max(0.0) - target.array() * x + (-x.abs()).exp().log1p()).sum();
  Matrix v(1, 1);
  v(0, 0) = total;
  auto ln = logits.node();
  return make(std::move(v), {ln}, [ln, target](Node& self) {
    const auto s = 1.0 / (1.0 + (-ln->value.array()).exp());
    accumulate(*ln, ((s - target.array()) * self.grad(0, 0)).matrix());
  });
}

Tensor gaussian_nll_unit(const Tensor& mean, const Matrix& target) {
  if (mean.rows() != target.rows() || mean.cols() != target.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "gaussian_nll target shape");
  }
  const double n = static_cast<double>(target.size());
  Matrix v(1, 1);
  v(0, 0) = 0.5 * (mean.value() - target).squaredNorm() + 0.5 * n * std::log(2.0 * std::numbers::pi);
  auto mn = mean.node();
  return make(std::move(v), {mn}, [mn, target](Node& self) {
    accumulate(*mn, (mn->value - target) * self.grad(0, 0));
  });
}

Tensor kl_diag_to_full(const Tensor& mu_q, const Tensor& logvar_q, const std::vector<GaussianPrior>& priors,
                       const std::vector<std::size_t>& prior_index) {
  require_same_shape(mu_q, logvar_q, "kl_diag_to_full");
  const Eigen::Index l = mu_q.rows();
  const Eigen::Index n = mu_q.cols();
  if (static_cast<Eigen::Index>(prior_index.size()) != n) {
    throw Error(ErrorCode::ShapeMismatch, "kl_diag_to_full: one prior index per column");
  }
  Matrix g_mu(l, n), g_lv(l, n);
  double total = 0.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto& p = priors.at(prior_index[static_cast<std::size_t>(c)]);
    if (p.mean.size() != l) throw Error(ErrorCode::ShapeMismatch, "kl_diag_to_full: prior dim");
    const Eigen::VectorXd s = logvar_q.value().col(c);
    const Eigen::VectorXd var = s.array().exp();
    const Eigen::VectorXd delta = mu_q.value().col(c) - p.mean;
    const Eigen::VectorXd lam_delta = p.precision * delta;
    const double trace = p.precision.diagonal().dot(var);
    total += 0.5 * (trace + delta.dot(lam_delta) - static_cast<double>(l) - p.log_det_precision - s.sum());
    g_mu.col(c) = lam_delta;
    g_lv.col(c) = 0.5 * (p.precision.diagonal().cwiseProduct(var).array() - 1.0);
  }
  Matrix v(1, 1);
  v(0, 0) = total;
  auto mn = mu_q.node(), ln = logvar_q.node();
  return make(std::move(v), {mn, ln}, [mn, ln, g_mu = std::move(g_mu), g_lv = std::move(g_lv)](Node& self) {
    const double g = self.grad(0, 0);
    accumulate(*mn, g * g_mu);
    accumulate(*ln, g * g_lv);
  });
}

void backward(const Tensor& root) {
  if (root.rows() != 1 || root.cols() != 1) throw Error(ErrorCode::ShapeMismatch, "backward needs a scalar root");
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->grad.resize(0, 0);
  root.node()->grad = Matrix::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.size() == 0) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
    if (n->backward) n->backward(*n);
  }
}

}  // namespace mhng::ad
