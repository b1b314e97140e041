#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "autodiff.hpp"
#include "gmm.hpp"
#include "probability.hpp"

namespace mhng {

enum class PixelLikelihood { Bernoulli, Gaussian };

struct VaeArch {
  int input_dim = 784;
  std::vector<int> hidden{512, 256};
  int latent_dim = 12;
  PixelLikelihood likelihood = PixelLikelihood::Bernoulli;

  void validate() const;
  bool operator==(const VaeArch&) const = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;

  bool operator==(const DenseLayer&) const = default;
};

/// Encoder: hidden ReLU stack then two linear heads (mean, log-variance).
/// Decoder: mirrored ReLU stack ending in per-pixel logits.
struct VaeParams {
  VaeArch arch;
  std::vector<DenseLayer> encoder;
  DenseLayer enc_mean;
  DenseLayer enc_logvar;
  std::vector<DenseLayer> decoder;

  static VaeParams init(const VaeArch& arch, RngStream& rng);
  static VaeParams zeros(const VaeArch& arch);

  /// Every layer in a fixed order: weights then biases.
  std::vector<Matrix*> weights();
  std::vector<Vector*> biases();
  std::size_t parameter_count() const;
  bool all_finite() const;

  bool operator==(const VaeParams&) const = default;
};

struct LatentPrior {
  Vector mu_p;
  SpdMatrix lambda_p;
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  AdamConfig adam;
  /// 0 means full batch.
  std::size_t batch_size = 0;
};

enum class PerceiveMode { Sample, Mean };

struct Encoding {
  Matrix mean;    // L x N
  Matrix logvar;  // L x N
};

/// Deterministic forward pass; images are columns with pixels in [0, 1].
Encoding encode(const VaeParams& p, const Matrix& images);
Matrix reparameterize(const Matrix& mean, const Matrix& logvar, RngStream& rng);
/// Pixel logits (Bernoulli) or means (Gaussian), one column per latent.
Matrix decode(const VaeParams& p, const Matrix& z);

double kl_to_full_gaussian(const Vector& mu_q, const Vector& logvar_q, const LatentPrior& prior);

struct ElboResult {
  double loss = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
  VaeParams grads;  // same layout as the params
};

/// Negative ELBO summed over the batch, with one prior per column.
ElboResult elbo_loss(const VaeParams& p, const Matrix& batch, const std::vector<LatentPrior>& priors, RngStream& rng);

/// Same as above but with a shared prior table and an index per column.
ElboResult elbo_loss_indexed(const VaeParams& p, const Matrix& batch, const std::vector<LatentPrior>& table,
                             const std::vector<std::size_t>& prior_index, RngStream& rng);

class Adam {
 public:
  explicit Adam(const VaeParams& shape, AdamConfig cfg = {});
  void step(VaeParams& p, const VaeParams& grads);

 private:
  AdamConfig cfg_;
  long t_ = 0;
  VaeParams m_;
  VaeParams v_;
};

struct TrainReport {
  double first_loss = 0.0;
  double last_loss = 0.0;
  std::size_t steps = 0;
};

/// Adam steps with per-datum priors (mu_{w_d}, Lambda_{w_d}) taken from phi.
TrainReport train(VaeParams& p, const Matrix& data, const SignVector& signs, const ComponentSet& phi,
                  std::size_t iters, const TrainConfig& cfg, RngStream& rng);

/// Training against an explicit prior table (used for pretraining with N(0, I)).
TrainReport train_with_priors(VaeParams& p, const Matrix& data, const std::vector<LatentPrior>& table,
                              const std::vector<std::size_t>& prior_index, std::size_t iters,
                              const TrainConfig& cfg, RngStream& rng);

Vector perceive(const VaeParams& p, const Vector& image, RngStream& rng, PerceiveMode mode);
Matrix perceive_batch(const VaeParams& p, const Matrix& images, RngStream& rng, PerceiveMode mode);

/// Image decoded from the mean of component w, mapped to [0, 1].
Vector recall_image(const VaeParams& p, const ComponentSet& phi, Sign w);

void save_vae(std::ostream& os, const VaeParams& p);
VaeParams load_vae(std::istream& is);
void save_vae(const std::filesystem::path& path, const VaeParams& p);
VaeParams load_vae(const std::filesystem::path& path);

}  // namespace mhng
