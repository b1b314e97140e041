#include "agent.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "error.hpp"

namespace mhng {

const char* agent_name(AgentId id) noexcept { return id == AgentId::A ? "A" : "B"; }

void MiSchedule::validate() const {
  if (mi_rounds < 1) throw Error(ErrorCode::InvalidConfig, "mi_rounds must be >= 1");
  if (vae_iters_per_round < 0) throw Error(ErrorCode::InvalidConfig, "vae_iters_per_round must be >= 0");
}

Agent::Agent(AgentId id, AgentOptions opts, std::uint64_t seed)
    : id_(id), opts_(std::move(opts)), pi_(MixtureWeights::uniform(opts_.k)), rng_(seed) {
  opts_.hyper.validate();
  if (opts_.k == 0) throw Error(ErrorCode::InvalidConfig, "K must be >= 1");
}

PretrainedVae Agent::pretrain(const AgentOptions& opts, const VaeArch& arch, const Matrix& observations,
                              std::uint64_t seed) {
  if (arch.latent_dim != opts.hyper.dim()) throw Error(ErrorCode::DimensionMismatch, "VAE latent dim vs prior dim");
  RngStream rng(seed);
  VaeParams params = VaeParams::init(arch, rng);
  if (opts.pretrain_iters > 0) {
    const auto l = opts.hyper.dim();
    std::vector<LatentPrior> standard{{Vector::Zero(l), SpdMatrix::identity(l)}};
    std::vector<std::size_t> index(static_cast<std::size_t>(observations.cols()), 0);
    train_with_priors(params, observations, standard, index, static_cast<std::size_t>(opts.pretrain_iters), opts.train,
                      rng);
  }
  return {std::move(params), rng};
}

Agent Agent::with_pretrained(AgentId id, const AgentOptions& opts, PretrainedVae pre, const Matrix& observations) {
  if (pre.params.arch.latent_dim != opts.hyper.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "VAE latent dim vs prior dim");
  }
  Agent a(id, opts, 0);
  a.rng_ = pre.rng;
  a.vae_ = std::move(pre.params);
  a.perceive_all(observations);
  a.w_.resize(a.z_.size());
  for (auto& w : a.w_) w = static_cast<Sign>(a.rng_.uniform_index(a.opts_.k));
  a.phi_ = sample_prior_components(a.opts_.hyper, a.opts_.k, a.rng_);
  return a;
}

Agent Agent::with_vae(AgentId id, const AgentOptions& opts, const VaeArch& arch, const Matrix& observations,
                      std::uint64_t seed) {
  return with_pretrained(id, opts, pretrain(opts, arch, observations, seed), observations);
}

Agent Agent::with_latents(AgentId id, const AgentOptions& opts, std::vector<Vector> latents, std::uint64_t seed) {
  Agent a(id, opts, seed);
  for (const auto& z : latents) {
    if (z.size() != a.latent_dim()) throw Error(ErrorCode::DimensionMismatch, "latent dim vs prior dim");
  }
  a.z_ = std::move(latents);
  a.w_.resize(a.z_.size());
  for (auto& w : a.w_) w = static_cast<Sign>(a.rng_.uniform_index(a.opts_.k));
  a.phi_ = sample_prior_components(a.opts_.hyper, a.opts_.k, a.rng_);
  return a;
}

void Agent::check_index(std::size_t d) const {
  if (d >= z_.size()) {
    throw Error(ErrorCode::IndexOutOfRange, "object " + std::to_string(d) + " not in [0, " + std::to_string(z_.size()) + ")");
  }
}

Sign Agent::utter(std::size_t d) {
  check_index(d);
  return sample_sign(z_[d], phi_, pi_, rng_);
}

Sign Agent::judge(std::size_t d, Sign proposed, AcceptRule rule) {
  check_index(d);
  if (proposed < 0 || static_cast<std::size_t>(proposed) >= opts_.k) {
    throw Error(ErrorCode::IndexOutOfRange, "proposed sign " + std::to_string(proposed));
  }
  if (rule == AcceptRule::Always) {
    w_[d] = proposed;
    return proposed;
  }
  const double r = acceptance_probability(z_[d], phi_, proposed, w_[d]);
  const double u = rng_.uniform();
  if (u < r) w_[d] = proposed;
  return w_[d];
}

void Agent::resample_signs() {
  for (std::size_t d = 0; d < z_.size(); ++d) w_[d] = sample_sign(z_[d], phi_, pi_, rng_);
}

void Agent::refresh_components() { phi_ = gibbs_sample_components(z_, w_, opts_.hyper, opts_.k, rng_); }

void Agent::learn(const Matrix& observations, const MiSchedule& schedule) {
  schedule.validate();
  if (!vae_ || !opts_.mutual_inference) {
    refresh_components();
    return;
  }
  for (int round = 0; round < schedule.mi_rounds; ++round) {
    if (schedule.vae_iters_per_round > 0) {
      train(*vae_, observations, w_, phi_, static_cast<std::size_t>(schedule.vae_iters_per_round), opts_.train, rng_);
      perceive_all(observations);
    }
    refresh_components();
  }
}

void Agent::perceive_all(const Matrix& observations) {
  if (!vae_) return;
  if (!z_.empty() && static_cast<std::size_t>(observations.cols()) != z_.size()) {
    throw Error(ErrorCode::LengthMismatch, "observation count changed");
  }
  const Matrix z = perceive_batch(*vae_, observations, rng_, opts_.perceive_mode);
  z_.resize(static_cast<std::size_t>(z.cols()));
  for (Eigen::Index d = 0; d < z.cols(); ++d) z_[static_cast<std::size_t>(d)] = z.col(d);
}

Vector Agent::recall(Sign w) const {
  if (!vae_) throw Error(ErrorCode::InvalidConfig, "agent has no decoder");
  return recall_image(*vae_, phi_, w);
}

void AgentProbe::assign_signs(Agent& a, const SignVector& w) {
  if (w.size() != a.w_.size()) throw Error(ErrorCode::LengthMismatch, "assign_signs");
  for (const Sign s : w) {
    if (s < 0 || static_cast<std::size_t>(s) >= a.opts_.k) throw Error(ErrorCode::IndexOutOfRange, "assign_signs");
  }
  a.w_ = w;
}

namespace {

constexpr std::array<char, 7> kAgentMagic = {'I', 'G', 'V', 'A', 'G', 'T', '1'};

void write_matrix(std::ostream& os, const Matrix& m) {
  os << m.rows() << ' ' << m.cols();
  for (Eigen::Index i = 0; i < m.size(); ++i) os << ' ' << m.data()[i];
  os << '\n';
}

Matrix read_matrix(std::istream& is) {
  Eigen::Index r = 0, c = 0;
  if (!(is >> r >> c) || r < 0 || c < 0) throw Error(ErrorCode::TruncatedFile, "agent checkpoint matrix");
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (!(is >> m.data()[i])) throw Error(ErrorCode::TruncatedFile, "agent checkpoint matrix data");
  }
  return m;
}

}  // namespace

void Agent::save(std::ostream& os) const {
  os.write(kAgentMagic.data(), kAgentMagic.size());
  os.precision(17);
  os << '\n' << (id_ == AgentId::A ? 'A' : 'B') << ' ' << opts_.k << ' ' << opts_.hyper.alpha << ' ' << opts_.hyper.nu
     << ' ' << (opts_.mutual_inference ? 1 : 0) << ' ' << (opts_.perceive_mode == PerceiveMode::Sample ? 1 : 0) << ' '
     << opts_.pretrain_iters << ' ' << opts_.train.batch_size << ' ' << opts_.train.adam.lr << ' '
     << opts_.train.adam.beta1 << ' ' << opts_.train.adam.beta2 << ' ' << opts_.train.adam.eps << '\n';
  write_matrix(os, opts_.hyper.m);
  write_matrix(os, opts_.hyper.beta.data());
  for (const auto& c : phi_.components) {
    write_matrix(os, c.mu);
    write_matrix(os, c.lambda.data());
  }
  os << z_.size();
  for (const Sign w : w_) os << ' ' << w;
  os << '\n';
  for (const auto& z : z_) write_matrix(os, z);
  rng_.save_state(os);
  os << '\n' << (vae_ ? 1 : 0) << '\n';
  if (vae_) save_vae(os, *vae_);
  if (!os) throw Error(ErrorCode::Io, "failed writing agent checkpoint");
}

Agent Agent::load(std::istream& is) {
  std::array<char, 7> magic{};
  if (!is.read(magic.data(), magic.size())) throw Error(ErrorCode::TruncatedFile, "agent checkpoint magic");
  if (magic != kAgentMagic) throw Error(ErrorCode::BadMagic, "not an IGVAGT1 checkpoint");
  char id = 0;
  AgentOptions opts;
  int mi = 0, sample = 0;
  is >> id >> opts.k >> opts.hyper.alpha >> opts.hyper.nu >> mi >> sample >> opts.pretrain_iters >>
      opts.train.batch_size >> opts.train.adam.lr >> opts.train.adam.beta1 >> opts.train.adam.beta2 >>
      opts.train.adam.eps;
  if (!is) throw Error(ErrorCode::TruncatedFile, "agent checkpoint header");
  opts.mutual_inference = mi != 0;
  opts.perceive_mode = sample != 0 ? PerceiveMode::Sample : PerceiveMode::Mean;
  opts.hyper.m = read_matrix(is).col(0);
  opts.hyper.beta = SpdMatrix(read_matrix(is));
  Agent a(id == 'A' ? AgentId::A : AgentId::B, opts, 0);
  a.phi_.components.clear();
  for (std::size_t k = 0; k < opts.k; ++k) {
    Vector mu = read_matrix(is).col(0);
    a.phi_.components.push_back({std::move(mu), SpdMatrix(read_matrix(is))});
  }
  std::size_t d = 0;
  is >> d;
  a.w_.resize(d);
  for (auto& w : a.w_) is >> w;
  a.z_.resize(d);
  for (auto& z : a.z_) z = read_matrix(is).col(0);
  a.rng_.load_state(is);
  int has_vae = 0;
  is >> has_vae;
  if (!is) throw Error(ErrorCode::TruncatedFile, "agent checkpoint body");
  if (has_vae != 0) {
    is.get();
    a.vae_ = load_vae(is);
  }
  return a;
}

void Agent::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string());
  save(os);
}

Agent Agent::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return load(is);
}

void AgentProbe::assign_components(Agent& a, ComponentSet phi) {
  if (phi.size() != a.opts_.k || phi.dim() != a.latent_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "assign_components");
  }
  a.phi_ = std::move(phi);
}

}  // namespace mhng
