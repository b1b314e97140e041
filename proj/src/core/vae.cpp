#include "vae.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "error.hpp"

namespace mhng {

namespace {

DenseLayer make_layer(int in, int out, RngStream* rng) {
  DenseLayer layer{Matrix::Zero(out, in), Vector::Zero(out)};
  if (rng != nullptr) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = bound * (2.0 * rng->uniform() - 1.0);
    }
    for (auto& b : layer.bias) b = bound * (2.0 * rng->uniform() - 1.0);
  }
  return layer;
}

VaeParams build(const VaeArch& arch, RngStream* rng) {
  arch.validate();
  VaeParams p;
  p.arch = arch;
  int in = arch.input_dim;
  for (const int h : arch.hidden) {
    p.encoder.push_back(make_layer(in, h, rng));
    in = h;
  }
  p.enc_mean = make_layer(in, arch.latent_dim, rng);
  p.enc_logvar = make_layer(in, arch.latent_dim, rng);
  in = arch.latent_dim;
  for (auto it = arch.hidden.rbegin(); it != arch.hidden.rend(); ++it) {
    p.decoder.push_back(make_layer(in, *it, rng));
    in = *it;
  }
  p.decoder.push_back(make_layer(in, arch.input_dim, rng));
  return p;
}

struct LayerVars {
  ad::Tensor w;
  ad::Tensor b;
};

LayerVars leaf(const DenseLayer& layer) {
  return {ad::parameter(layer.weight), ad::parameter(Matrix(layer.bias))};
}

ad::Tensor affine(const LayerVars& v, const ad::Tensor& x) { return ad::add_bias(ad::matmul(v.w, x), v.b); }

struct ForwardGraph {
  std::vector<LayerVars> encoder;
  LayerVars mean;
  LayerVars logvar;
  std::vector<LayerVars> decoder;

  explicit ForwardGraph(const VaeParams& p) : mean(leaf(p.enc_mean)), logvar(leaf(p.enc_logvar)) {
    for (const auto& l : p.encoder) encoder.push_back(leaf(l));
    for (const auto& l : p.decoder) decoder.push_back(leaf(l));
  }

  void collect(VaeParams& grads) const {
    auto copy = [](const LayerVars& v, DenseLayer& out) {
      out.weight = v.w.grad();
      out.bias = v.b.grad().col(0);
    };
    for (std::size_t i = 0; i < encoder.size(); ++i) copy(encoder[i], grads.encoder[i]);
    copy(mean, grads.enc_mean);
    copy(logvar, grads.enc_logvar);
    for (std::size_t i = 0; i < decoder.size(); ++i) copy(decoder[i], grads.decoder[i]);
  }
};

void check_input(const VaeParams& p, const Matrix& images) {
  if (images.rows() != p.arch.input_dim) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(p.arch.input_dim) + " pixels, got " +
                                              std::to_string(images.rows()));
  }
}

Matrix dense_forward(const DenseLayer& l, const Matrix& x) {
  Matrix y = l.weight * x;
  y.colwise() += l.bias;
  return y;
}

std::vector<ad::GaussianPrior> to_ad_priors(const std::vector<LatentPrior>& table) {
  std::vector<ad::GaussianPrior> out;
  out.reserve(table.size());
  for (const auto& p : table) out.push_back({p.mu_p, p.lambda_p.data(), p.lambda_p.log_det()});
  return out;
}

template <typename F>
void for_each_array(VaeParams& p, F&& f) {
  for (auto* w : p.weights()) f(*w);
  for (auto* b : p.biases()) f(*b);
}

}  // namespace

void VaeArch::validate() const {
  if (input_dim <= 0 || latent_dim <= 0) throw Error(ErrorCode::InvalidConfig, "VAE dims must be positive");
  for (const int h : hidden) {
    if (h <= 0) throw Error(ErrorCode::InvalidConfig, "hidden widths must be positive");
  }
}

VaeParams VaeParams::init(const VaeArch& arch, RngStream& rng) { return build(arch, &rng); }
VaeParams VaeParams::zeros(const VaeArch& arch) { return build(arch, nullptr); }

std::vector<Matrix*> VaeParams::weights() {
  std::vector<Matrix*> out;
  for (auto& l : encoder) out.push_back(&l.weight);
  out.push_back(&enc_mean.weight);
  out.push_back(&enc_logvar.weight);
  for (auto& l : decoder) out.push_back(&l.weight);
  return out;
}

std::vector<Vector*> VaeParams::biases() {
  std::vector<Vector*> out;
  for (auto& l : encoder) out.push_back(&l.bias);
  out.push_back(&enc_mean.bias);
  out.push_back(&enc_logvar.bias);
  for (auto& l : decoder) out.push_back(&l.bias);
  return out;
}

std::size_t VaeParams::parameter_count() const {
  std::size_t n = 0;
  auto& self = const_cast<VaeParams&>(*this);
  for_each_array(self, [&](const auto& a) { n += static_cast<std::size_t>(a.size()); });
  return n;
}

bool VaeParams::all_finite() const {
  bool ok = true;
  auto& self = const_cast<VaeParams&>(*this);
  for_each_array(self, [&](const auto& a) { ok = ok && a.allFinite(); });
  return ok;
}

Encoding encode(const VaeParams& p, const Matrix& images) {
  check_input(p, images);
  Matrix h = images;
  for (const auto& l : p.encoder) h = dense_forward(l, h).cwiseMax(0.0);
  return {dense_forward(p.enc_mean, h), dense_forward(p.enc_logvar, h)};
}

Matrix reparameterize(const Matrix& mean, const Matrix& logvar, RngStream& rng) {
  if (mean.rows() != logvar.rows() || mean.cols() != logvar.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "reparameterize");
  }
  Matrix z(mean.rows(), mean.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) z(r, c) = mean(r, c) + std::exp(0.5 * logvar(r, c)) * rng.normal();
  }
  return z;
}

Matrix decode(const VaeParams& p, const Matrix& z) {
  if (z.rows() != p.arch.latent_dim) throw Error(ErrorCode::ShapeMismatch, "latent dim");
  Matrix h = z;
  for (std::size_t i = 0; i + 1 < p.decoder.size(); ++i) h = dense_forward(p.decoder[i], h).cwiseMax(0.0);
  return dense_forward(p.decoder.back(), h);
}

double kl_to_full_gaussian(const Vector& mu_q, const Vector& logvar_q, const LatentPrior& prior) {
  const Eigen::Index l = mu_q.size();
  if (logvar_q.size() != l || prior.mu_p.size() != l || prior.lambda_p.dim() != l) {
    throw Error(ErrorCode::DimensionMismatch, "kl_to_full_gaussian");
  }
  const Matrix& lam = prior.lambda_p.data();
  const Vector delta = prior.mu_p - mu_q;
  const double trace = lam.diagonal().dot(logvar_q.array().exp().matrix());
  const double quad = delta.dot(lam * delta);
  return 0.5 * (trace + quad - static_cast<double>(l) - prior.lambda_p.log_det() - logvar_q.sum());
}

ElboResult elbo_loss_indexed(const VaeParams& p, const Matrix& batch, const std::vector<LatentPrior>& table,
                             const std::vector<std::size_t>& prior_index, RngStream& rng) {
  check_input(p, batch);
  if (static_cast<Eigen::Index>(prior_index.size()) != batch.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "one prior per batch column required");
  }
  ForwardGraph g(p);
  ad::Tensor h = ad::constant(batch);
  for (const auto& l : g.encoder) h = ad::relu(affine(l, h));
  const ad::Tensor mu = affine(g.mean, h);
  const ad::Tensor logvar = affine(g.logvar, h);

  Matrix eps(mu.rows(), mu.cols());
  for (Eigen::Index c = 0; c < eps.cols(); ++c) {
    for (Eigen::Index r = 0; r < eps.rows(); ++r) eps(r, c) = rng.normal();
  }
  ad::Tensor z = ad::add(mu, ad::mul(ad::exp(ad::scale(logvar, 0.5)), ad::constant(std::move(eps))));
  for (std::size_t i = 0; i + 1 < g.decoder.size(); ++i) z = ad::relu(affine(g.decoder[i], z));
  const ad::Tensor out = affine(g.decoder.back(), z);

  const ad::Tensor rec = p.arch.likelihood == PixelLikelihood::Bernoulli ? ad::bernoulli_nll_with_logits(out, batch)
                                                                         : ad::gaussian_nll_unit(out, batch);
  const ad::Tensor kl = ad::kl_diag_to_full(mu, logvar, to_ad_priors(table), prior_index);
  const ad::Tensor loss = ad::add(rec, kl);
  ad::backward(loss);

  ElboResult result{loss.scalar(), rec.scalar(), kl.scalar(), VaeParams::zeros(p.arch)};
  g.collect(result.grads);
  return result;
}

ElboResult elbo_loss(const VaeParams& p, const Matrix& batch, const std::vector<LatentPrior>& priors, RngStream& rng) {
  std::vector<std::size_t> index(priors.size());
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
  return elbo_loss_indexed(p, batch, priors, index, rng);
}

Adam::Adam(const VaeParams& shape, AdamConfig cfg)
    : cfg_(cfg), m_(VaeParams::zeros(shape.arch)), v_(VaeParams::zeros(shape.arch)) {
  if (!(cfg_.lr > 0.0)) throw Error(ErrorCode::InvalidConfig, "Adam learning rate must be > 0");
}

void Adam::step(VaeParams& p, const VaeParams& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    param.array() -= cfg_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
  };
  auto pw = p.weights(), mw = m_.weights(), vw = v_.weights();
  auto gw = const_cast<VaeParams&>(grads).weights();
  for (std::size_t i = 0; i < pw.size(); ++i) update(*pw[i], *mw[i], *vw[i], *gw[i]);
  auto pb = p.biases(), mb = m_.biases(), vb = v_.biases();
  auto gb = const_cast<VaeParams&>(grads).biases();
  for (std::size_t i = 0; i < pb.size(); ++i) update(*pb[i], *mb[i], *vb[i], *gb[i]);
}

TrainReport train_with_priors(VaeParams& p, const Matrix& data, const std::vector<LatentPrior>& table,
                              const std::vector<std::size_t>& prior_index, std::size_t iters,
                              const TrainConfig& cfg, RngStream& rng) {
  TrainReport report;
  if (iters == 0) return report;
  const auto n = static_cast<std::size_t>(data.cols());
  if (prior_index.size() != n) throw Error(ErrorCode::LengthMismatch, "one prior per datum required");
  const std::size_t batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
  Adam adam(p, cfg.adam);
  std::size_t cursor = 0;
  for (std::size_t it = 0; it < iters; ++it) {
    ElboResult r;
    if (batch == n) {
      r = elbo_loss_indexed(p, data, table, prior_index, rng);
    } else {
      Matrix sub(data.rows(), static_cast<Eigen::Index>(batch));
      std::vector<std::size_t> sub_index(batch);
      for (std::size_t j = 0; j < batch; ++j) {
        const std::size_t d = (cursor + j) % n;
        sub.col(static_cast<Eigen::Index>(j)) = data.col(static_cast<Eigen::Index>(d));
        sub_index[j] = prior_index[d];
      }
      cursor = (cursor + batch) % n;
      r = elbo_loss_indexed(p, sub, table, sub_index, rng);
    }
    if (it == 0) report.first_loss = r.loss;
    report.last_loss = r.loss;
    adam.step(p, r.grads);
    ++report.steps;
    if (!std::isfinite(r.loss) || !p.all_finite()) {
      std::ostringstream msg;
      msg << "non-finite VAE state at step " << it << " (loss " << r.loss << ", reconstruction " << r.reconstruction
          << ", kl " << r.kl << ")";
      throw Error(ErrorCode::NumericalFailure, msg.str());
    }
  }
  return report;
}

TrainReport train(VaeParams& p, const Matrix& data, const SignVector& signs, const ComponentSet& phi,
                  std::size_t iters, const TrainConfig& cfg, RngStream& rng) {
  if (static_cast<Eigen::Index>(signs.size()) != data.cols()) throw Error(ErrorCode::LengthMismatch, "|signs| != D");
  std::vector<LatentPrior> table;
  table.reserve(phi.size());
  for (const auto& c : phi.components) table.push_back({c.mu, c.lambda});
  std::vector<std::size_t> index(signs.size());
  for (std::size_t d = 0; d < signs.size(); ++d) {
    phi.at(signs[d]);
    index[d] = static_cast<std::size_t>(signs[d]);
  }
  return train_with_priors(p, data, table, index, iters, cfg, rng);
}

Vector perceive(const VaeParams& p, const Vector& image, RngStream& rng, PerceiveMode mode) {
  return perceive_batch(p, image, rng, mode).col(0);
}

Matrix perceive_batch(const VaeParams& p, const Matrix& images, RngStream& rng, PerceiveMode mode) {
  auto enc = encode(p, images);
  if (mode == PerceiveMode::Mean) return enc.mean;
  return reparameterize(enc.mean, enc.logvar, rng);
}

Vector recall_image(const VaeParams& p, const ComponentSet& phi, Sign w) {
  const Matrix out = decode(p, phi.at(w).mu);
  if (p.arch.likelihood == PixelLikelihood::Bernoulli) {
    return (1.0 / (1.0 + (-out.col(0).array()).exp())).matrix();
  }
  return out.col(0).cwiseMax(0.0).cwiseMin(1.0);
}

namespace {

constexpr std::array<char, 7> kVaeMagic = {'I', 'G', 'V', 'V', 'A', 'E', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<unsigned char, 4> b = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b.data()), 4);
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw Error(ErrorCode::TruncatedFile, "VAE checkpoint header");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  std::array<unsigned char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b.data()), 8);
}

double get_f64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 8)) throw Error(ErrorCode::TruncatedFile, "VAE checkpoint data");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t{b[static_cast<std::size_t>(i)]} << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void save_vae(std::ostream& os, const VaeParams& p) {
  os.write(kVaeMagic.data(), kVaeMagic.size());
  put_u32(os, static_cast<std::uint32_t>(p.arch.input_dim));
  put_u32(os, static_cast<std::uint32_t>(p.arch.latent_dim));
  put_u32(os, p.arch.likelihood == PixelLikelihood::Bernoulli ? 0u : 1u);
  put_u32(os, static_cast<std::uint32_t>(p.arch.hidden.size()));
  for (const int h : p.arch.hidden) put_u32(os, static_cast<std::uint32_t>(h));
  auto& self = const_cast<VaeParams&>(p);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  for_each_array(self, [&](const auto& a) { shapes.emplace_back(a.rows(), a.cols()); });
  put_u32(os, static_cast<std::uint32_t>(shapes.size()));
  for (const auto& [r, c] : shapes) {
    put_u32(os, static_cast<std::uint32_t>(r));
    put_u32(os, static_cast<std::uint32_t>(c));
  }
  for_each_array(self, [&](const auto& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) put_f64(os, a.data()[i]);
  });
  if (!os) throw Error(ErrorCode::Io, "failed writing VAE checkpoint");
}

VaeParams load_vae(std::istream& is) {
  std::array<char, 7> magic{};
  if (!is.read(magic.data(), magic.size())) throw Error(ErrorCode::TruncatedFile, "VAE checkpoint magic");
  if (magic != kVaeMagic) throw Error(ErrorCode::BadMagic, "not an IGVVAE1 checkpoint");
  VaeArch arch;
  arch.input_dim = static_cast<int>(get_u32(is));
  arch.latent_dim = static_cast<int>(get_u32(is));
  arch.likelihood = get_u32(is) == 0 ? PixelLikelihood::Bernoulli : PixelLikelihood::Gaussian;
  const auto n_hidden = get_u32(is);
  if (n_hidden > 64) throw Error(ErrorCode::BadMagic, "implausible hidden layer count");
  arch.hidden.resize(n_hidden);
  for (auto& h : arch.hidden) h = static_cast<int>(get_u32(is));
  VaeParams p = VaeParams::zeros(arch);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> expected;
  for_each_array(p, [&](const auto& a) { expected.emplace_back(a.rows(), a.cols()); });
  if (get_u32(is) != expected.size()) throw Error(ErrorCode::ShapeMismatch, "checkpoint array count");
  for (const auto& [r, c] : expected) {
    const auto rr = get_u32(is), cc = get_u32(is);
    if (rr != r || cc != c) throw Error(ErrorCode::ShapeMismatch, "checkpoint shape table");
  }
  for_each_array(p, [&](auto& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = get_f64(is);
  });
  return p;
}

void save_vae(const std::filesystem::path& path, const VaeParams& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string());
  save_vae(os, p);
}

VaeParams load_vae(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return load_vae(is);
}

}  // namespace mhng
