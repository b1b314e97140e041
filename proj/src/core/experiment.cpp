#include "experiment.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "log.hpp"
#include "transport.hpp"

#ifndef MHNG_VERSION_STRING
#define MHNG_VERSION_STRING "0.0.0"
#endif
#ifndef MHNG_GIT_REV
#define MHNG_GIT_REV "unknown"
#endif

namespace mhng {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kStreamData = 10;
constexpr std::uint64_t kStreamTrial = 1000;

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::InvalidConfig, field + ": " + why);
}

void check_keys(const YAML::Node& node, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!node.IsMap()) bad(path.empty() ? "<root>" : path, "expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      bad(path.empty() ? key : path + "." + key, "unknown key");
    }
  }
}

template <typename T>
T read(const YAML::Node& parent, const char* key, const std::string& path, T fallback) {
  const auto node = parent[key];
  if (!node) return fallback;
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    bad(path.empty() ? key : path + "." + key, "wrong type");
  }
}

std::string join(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path raw(p);
  return raw.is_absolute() || base.empty() ? raw : base / raw;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string slug(const SweepEntry& e) {
  return std::string(condition_name(e.condition)) + (e.mi ? "_mi" : "_nomi");
}

DatasetSpec::Kind parse_kind(const std::string& s) {
  if (s == "mnist") return DatasetSpec::Kind::Mnist;
  if (s == "folder") return DatasetSpec::Kind::Folder;
  if (s == "synthetic") return DatasetSpec::Kind::Synthetic;
  bad("dataset.kind", "expected mnist, folder or synthetic, got '" + s + "'");
}

const char* kind_name(DatasetSpec::Kind k) {
  switch (k) {
    case DatasetSpec::Kind::Mnist: return "mnist";
    case DatasetSpec::Kind::Folder: return "folder";
    case DatasetSpec::Kind::Synthetic: return "synthetic";
  }
  return "?";
}

}  // namespace

ExperimentConfig parse_experiment(const std::string& text, const fs::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    bad("<yaml>", e.what());
  }
  if (!root || root.IsNull()) bad("<root>", "empty config");
  check_keys(root, "",
             {"name", "seed", "trials", "workers", "output", "dataset", "view", "game", "hyper", "mutual_inference",
              "vae", "sweep", "exports"});

  ExperimentConfig cfg;
  cfg.source_text = text;
  cfg.source_dir = base_dir;
  cfg.name = read<std::string>(root, "name", "", cfg.name);
  cfg.seed = read<std::uint64_t>(root, "seed", "", cfg.seed);
  cfg.trials = read<int>(root, "trials", "", cfg.trials);
  cfg.workers = read<int>(root, "workers", "", cfg.workers);
  cfg.output = resolve(base_dir, read<std::string>(root, "output", "", cfg.output.string()));

  const auto ds = root["dataset"];
  if (!ds) bad("dataset", "missing");
  check_keys(ds, "dataset", {"kind", "images", "labels", "root", "height", "width", "classes", "per_class", "d"});
  auto& d = cfg.dataset;
  d.kind = parse_kind(read<std::string>(ds, "kind", "dataset", "mnist"));
  if (ds["images"]) d.images = resolve(base_dir, read<std::string>(ds, "images", "dataset", ""));
  if (ds["labels"]) d.labels = resolve(base_dir, read<std::string>(ds, "labels", "dataset", ""));
  if (ds["root"]) d.root = resolve(base_dir, read<std::string>(ds, "root", "dataset", ""));
  d.height = read<int>(ds, "height", "dataset", d.height);
  d.width = read<int>(ds, "width", "dataset", d.width);
  d.classes = read<std::vector<int>>(ds, "classes", "dataset", {});
  d.per_class = read<std::size_t>(ds, "per_class", "dataset", 0);
  d.synthetic_d = read<std::size_t>(ds, "d", "dataset", d.synthetic_d);

  if (const auto view = root["view"]) {
    check_keys(view, "view", {"rotation_a", "rotation_b"});
    cfg.rotation_a = read<double>(view, "rotation_a", "view", cfg.rotation_a);
    cfg.rotation_b = read<double>(view, "rotation_b", "view", cfg.rotation_b);
  }

  auto& g = cfg.game;
  if (const auto game = root["game"]) {
    check_keys(game, "game", {"K", "T", "L", "shuffle_order"});
    g.k = read<std::size_t>(game, "K", "game", g.k);
    g.iterations = read<int>(game, "T", "game", g.iterations);
    g.l = read<Eigen::Index>(game, "L", "game", g.l);
    g.shuffle_order = read<bool>(game, "shuffle_order", "game", g.shuffle_order);
  }

  double alpha = 1.0, nu = 12.0;
  Vector m = Vector::Zero(g.l);
  Matrix beta = 0.05 * Matrix::Identity(g.l, g.l);
  if (const auto hy = root["hyper"]) {
    check_keys(hy, "hyper", {"alpha", "nu", "beta", "m"});
    alpha = read<double>(hy, "alpha", "hyper", alpha);
    nu = read<double>(hy, "nu", "hyper", nu);
    if (const auto mn = hy["m"]) {
      if (mn.IsScalar()) {
        m = Vector::Constant(g.l, read<double>(hy, "m", "hyper", 0.0));
      } else {
        const auto v = read<std::vector<double>>(hy, "m", "hyper", {});
        if (static_cast<Eigen::Index>(v.size()) != g.l) bad("hyper.m", "needs L entries");
        m = Eigen::Map<const Vector>(v.data(), g.l);
      }
    }
    if (const auto bn = hy["beta"]) {
      if (bn.IsScalar()) {
        beta = read<double>(hy, "beta", "hyper", 0.05) * Matrix::Identity(g.l, g.l);
      } else {
        const auto rows = read<std::vector<std::vector<double>>>(hy, "beta", "hyper", {});
        if (static_cast<Eigen::Index>(rows.size()) != g.l) bad("hyper.beta", "needs L rows");
        for (Eigen::Index i = 0; i < g.l; ++i) {
          if (static_cast<Eigen::Index>(rows[i].size()) != g.l) bad("hyper.beta", "needs L columns");
          for (Eigen::Index j = 0; j < g.l; ++j) beta(i, j) = rows[i][j];
        }
      }
    }
  }
  try {
    g.hyper = NWHyper{m, alpha, nu, SpdMatrix(beta)};
  } catch (const Error& e) {
    bad("hyper.beta", e.detail());
  }

  if (const auto mi = root["mutual_inference"]) {
    check_keys(mi, "mutual_inference", {"rounds", "vae_iters"});
    g.schedule.mi_rounds = read<int>(mi, "rounds", "mutual_inference", g.schedule.mi_rounds);
    g.schedule.vae_iters_per_round = read<int>(mi, "vae_iters", "mutual_inference", g.schedule.vae_iters_per_round);
  }

  auto& a = cfg.agent;
  a.arch.latent_dim = g.l;
  if (const auto vae = root["vae"]) {
    check_keys(vae, "vae", {"hidden", "likelihood", "lr", "batch_size", "pretrain_iters", "perceive"});
    a.arch.hidden = read<std::vector<int>>(vae, "hidden", "vae", a.arch.hidden);
    const auto lik = read<std::string>(vae, "likelihood", "vae", "bernoulli");
    if (lik == "bernoulli") {
      a.arch.likelihood = PixelLikelihood::Bernoulli;
    } else if (lik == "gaussian") {
      a.arch.likelihood = PixelLikelihood::Gaussian;
    } else {
      bad("vae.likelihood", "expected bernoulli or gaussian");
    }
    a.train.adam.lr = read<double>(vae, "lr", "vae", a.train.adam.lr);
    a.train.batch_size = read<std::size_t>(vae, "batch_size", "vae", a.train.batch_size);
    a.pretrain_iters = read<int>(vae, "pretrain_iters", "vae", a.pretrain_iters);
    const auto mode = read<std::string>(vae, "perceive", "vae", "sample");
    if (mode == "sample") {
      a.perceive_mode = PerceiveMode::Sample;
    } else if (mode == "mean") {
      a.perceive_mode = PerceiveMode::Mean;
    } else {
      bad("vae.perceive", "expected sample or mean");
    }
  }

  if (const auto sweep = root["sweep"]) {
    if (!sweep.IsSequence()) bad("sweep", "expected a list");
    for (std::size_t i = 0; i < sweep.size(); ++i) {
      const auto path = "sweep[" + std::to_string(i) + "]";
      const auto item = sweep[i];
      check_keys(item, path, {"condition", "mi"});
      const auto name = read<std::string>(item, "condition", path, "");
      const auto c = parse_condition(name);
      if (!c) bad(join(path, "condition"), "unknown condition '" + name + "'");
      cfg.sweep.push_back({*c, read<bool>(item, "mi", path, true)});
    }
  } else {
    cfg.sweep.push_back({Condition::Mh, true});
  }

  if (const auto ex = root["exports"]) {
    check_keys(ex, "exports", {"recalls", "latents", "confusion", "checkpoints"});
    auto& e = cfg.exports;
    e.recalls = read<bool>(ex, "recalls", "exports", e.recalls);
    e.latents = read<bool>(ex, "latents", "exports", e.latents);
    e.confusion = read<bool>(ex, "confusion", "exports", e.confusion);
    e.checkpoints = read<bool>(ex, "checkpoints", "exports", e.checkpoints);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  if (path.extension() == ".json") {
    ordered_json manifest;
    try {
      manifest = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      bad("<manifest>", e.what());
    }
    if (!manifest.contains("config_text") || !manifest.contains("config_dir")) {
      bad("<manifest>", "config_text and config_dir required");
    }
    return parse_experiment(manifest["config_text"].get<std::string>(),
                            fs::path(manifest["config_dir"].get<std::string>()));
  }
  return parse_experiment(text, fs::absolute(path).parent_path());
}

void ExperimentConfig::validate() const {
  if (trials < 2) bad("trials", "at least 2 trials are needed for a standard deviation");
  if (workers < 1) bad("workers", "must be >= 1");
  if (output.empty()) bad("output", "missing");
  if (sweep.empty()) bad("sweep", "empty");
  const auto& d = dataset;
  switch (d.kind) {
    case DatasetSpec::Kind::Mnist:
      if (d.images.empty()) bad("dataset.images", "missing");
      if (d.labels.empty()) bad("dataset.labels", "missing");
      if (!fs::exists(d.images)) bad("dataset.images", "no such file " + d.images.string());
      if (!fs::exists(d.labels)) bad("dataset.labels", "no such file " + d.labels.string());
      break;
    case DatasetSpec::Kind::Folder:
      if (d.root.empty()) bad("dataset.root", "missing");
      if (!fs::is_directory(d.root)) bad("dataset.root", "no such directory " + d.root.string());
      if (d.height < 1 || d.width < 1) bad("dataset.height", "image size must be positive");
      break;
    case DatasetSpec::Kind::Synthetic:
      if (d.synthetic_d < 1) bad("dataset.d", "must be >= 1");
      break;
  }
  for (const int c : d.classes) {
    if (c < 0) bad("dataset.classes", "class labels are non-negative");
  }
  if (!std::isfinite(rotation_a)) bad("view.rotation_a", "must be finite");
  if (!std::isfinite(rotation_b)) bad("view.rotation_b", "must be finite");
  if (game.k < 1) bad("game.K", "must be >= 1");
  if (game.iterations < 0) bad("game.T", "must be >= 0");
  if (game.l < 1) bad("game.L", "must be >= 1");
  if (game.hyper.alpha <= 0) bad("hyper.alpha", "must be > 0");
  if (game.hyper.nu <= static_cast<double>(game.l) - 1.0) bad("hyper.nu", "must exceed L - 1");
  if (game.schedule.mi_rounds < 0) bad("mutual_inference.rounds", "must be >= 0");
  if (game.schedule.vae_iters_per_round < 0) bad("mutual_inference.vae_iters", "must be >= 0");
  if (agent.arch.hidden.empty()) bad("vae.hidden", "need at least one hidden layer");
  for (const int h : agent.arch.hidden) {
    if (h < 1) bad("vae.hidden", "layer widths must be positive");
  }
  if (!(agent.train.adam.lr > 0)) bad("vae.lr", "must be > 0");
  if (agent.pretrain_iters < 0) bad("vae.pretrain_iters", "must be >= 0");
}

std::uint64_t ExperimentConfig::trial_seed(int trial) const {
  return derive_seed(seed, kStreamTrial + static_cast<std::uint64_t>(trial));
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  PreparedData out;
  RngStream rng(derive_seed(cfg.seed, kStreamData));
  if (d.kind == DatasetSpec::Kind::Synthetic) {
    SyntheticSpec spec;
    spec.k = cfg.game.k;
    spec.d = d.synthetic_d;
    spec.l = cfg.game.l;
    spec.hyper = cfg.game.hyper;
    spec.seed = derive_seed(cfg.seed, kStreamData);
    auto sample = synthesize_inter_gmm(spec);
    out.synthetic = true;
    out.z_a = std::move(sample.z_a);
    out.z_b = std::move(sample.z_b);
    out.truth = std::move(sample.w_true);
    out.provenance = "synthetic inter-GMM sample";
    return out;
  }

  ImageSet set = d.kind == DatasetSpec::Kind::Mnist ? load_mnist_idx(d.images, d.labels)
                                                    : load_image_folder(d.root, d.height, d.width);
  if (!d.classes.empty() || d.per_class > 0) {
    std::vector<int> classes = d.classes;
    if (classes.empty()) {
      const std::set<int> present(set.labels.begin(), set.labels.end());
      classes.assign(present.begin(), present.end());
    }
    std::size_t n = d.per_class;
    if (n == 0) {
      n = set.size();
      for (const int c : classes) {
        n = std::min<std::size_t>(n, static_cast<std::size_t>(std::count(set.labels.begin(), set.labels.end(), c)));
      }
    }
    set = subset_per_class(set, n, classes, rng);
  }
  if (set.size() == 0) bad("dataset", "no images selected");
  const ImageSet view_a = cfg.rotation_a == 0.0 ? set : rotate_all(set, cfg.rotation_a);
  const ImageSet view_b = cfg.rotation_b == 0.0 ? set : rotate_all(set, cfg.rotation_b);
  out.obs_a = view_a.to_matrix();
  out.obs_b = view_b.to_matrix();
  out.truth = set.labels;
  out.height = set.images.front().height;
  out.width = set.images.front().width;
  out.channels = set.images.front().channels;
  out.provenance = set.provenance;
  return out;
}

namespace {

GameConfig game_for(const ExperimentConfig& cfg, const PreparedData& data, const SweepEntry& entry, int trial) {
  GameConfig g = cfg.game;
  g.condition = entry.condition;
  g.mi_enabled = entry.mi;
  g.d = data.size();
  g.seed = cfg.trial_seed(trial);
  return g;
}

AgentSetup setup_for(const ExperimentConfig& cfg, const PreparedData& data) {
  AgentSetup s = cfg.agent;
  s.arch.input_dim = static_cast<int>(data.obs_a.rows());
  s.arch.latent_dim = cfg.game.l;
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  os << text;
}

void write_latents(const fs::path& path, const std::vector<Vector>& z, const LabelVector& truth, const SignVector& w) {
  std::ostringstream os;
  os << "d,label,sign";
  const Eigen::Index l = z.empty() ? 0 : z.front().size();
  for (Eigen::Index i = 0; i < l; ++i) os << ",z" << i;
  os << '\n';
  char buf[32];
  for (std::size_t d = 0; d < z.size(); ++d) {
    os << d << ',' << truth[d] << ',' << w[d];
    for (Eigen::Index i = 0; i < l; ++i) {
      std::snprintf(buf, sizeof buf, "%.9g", z[d](i));
      os << ',' << buf;
    }
    os << '\n';
  }
  write_text(path, os.str());
}

void write_confusion(const fs::path& dir, const char* agent, const LabelVector& truth, const SignVector& w, int k) {
  const auto cm = confusion_sorted(truth, w, k);
  std::ostringstream os;
  os << "truth";
  for (const int s : cm.permutation) os << ",sign_" << s;
  os << '\n';
  for (std::size_t r = 0; r < cm.counts.size(); ++r) {
    os << r;
    for (const long c : cm.counts[r]) os << ',' << c;
    os << '\n';
  }
  write_text(dir / (std::string("confusion_") + agent + ".csv"), os.str());
  ordered_json j;
  j["permutation"] = cm.permutation;
  j["trace"] = cm.trace();
  j["total"] = cm.total();
  write_text(dir / (std::string("assignment_") + agent + ".json"), j.dump(2) + "\n");
}

void write_recalls(const fs::path& dir, const char* agent, const Agent& a, const PreparedData& data) {
  for (std::size_t k = 0; k < a.num_signs(); ++k) {
    const Vector px = a.recall(static_cast<Sign>(k));
    Image img;
    img.height = data.height;
    img.width = data.width;
    img.channels = data.channels;
    img.pixels.assign(px.data(), px.data() + px.size());
    write_pgm(dir / (std::string("recall_") + agent + "_" + std::to_string(k) + ".pgm"), img);
  }
}

void export_trial(const ExperimentConfig& cfg, const PreparedData& data, const fs::path& dir, const GameResult& r) {
  fs::create_directories(dir);
  {
    std::ostringstream os;
    r.trace.write_csv(os);
    write_text(dir / "trace.csv", os.str());
  }
  {
    std::ostringstream os;
    r.trace.write_signs_csv(os);
    write_text(dir / "signs.csv", os.str());
  }
  const int k = static_cast<int>(cfg.game.k);
  if (cfg.exports.confusion) {
    write_confusion(dir, "a", data.truth, r.a.signs(), k);
    write_confusion(dir, "b", data.truth, r.b.signs(), k);
  }
  if (cfg.exports.latents) {
    write_latents(dir / "latents_a.csv", AgentProbe::latents(r.a), data.truth, r.a.signs());
    write_latents(dir / "latents_b.csv", AgentProbe::latents(r.b), data.truth, r.b.signs());
  }
  if (cfg.exports.recalls && r.a.has_vae()) {
    write_recalls(dir, "a", r.a, data);
    write_recalls(dir, "b", r.b, data);
  }
  if (cfg.exports.checkpoints) {
    r.a.save(dir / "agent_a.ckpt");
    r.b.save(dir / "agent_b.ckpt");
  }
}

GameResult play(const ExperimentConfig& cfg, const PreparedData& data, const SweepEntry& entry, int trial,
                const std::pair<PretrainedVae, PretrainedVae>* pre) {
  const auto g = game_for(cfg, data, entry, trial);
  if (data.synthetic) return run_latent(g, data.z_a, data.z_b, data.truth);
  return run(g, setup_for(cfg, data), data.obs_a, data.obs_b, data.truth, pre);
}

double final_or_nan(const GameTrace& t, double IterationRecord::*field) {
  if (t.iterations.empty()) return std::numeric_limits<double>::quiet_NaN();
  return t.iterations.back().*field;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double mean = 0;
  for (const double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, std::numeric_limits<double>::quiet_NaN()};
  double ss = 0;
  for (const double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

ordered_json config_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["name"] = cfg.name;
  j["seed"] = cfg.seed;
  j["trials"] = cfg.trials;
  const auto& d = cfg.dataset;
  j["dataset"] = {{"kind", kind_name(d.kind)},       {"images", d.images.string()}, {"labels", d.labels.string()},
                  {"root", d.root.string()},         {"height", d.height},          {"width", d.width},
                  {"classes", d.classes},            {"per_class", d.per_class},    {"d", d.synthetic_d}};
  j["view"] = {{"rotation_a", cfg.rotation_a}, {"rotation_b", cfg.rotation_b}};
  const auto& g = cfg.game;
  j["game"] = {{"K", g.k}, {"T", g.iterations}, {"L", g.l}, {"shuffle_order", g.shuffle_order}};
  std::vector<double> m(g.hyper.m.data(), g.hyper.m.data() + g.hyper.m.size());
  std::vector<std::vector<double>> beta;
  for (Eigen::Index i = 0; i < g.l; ++i) {
    beta.emplace_back();
    for (Eigen::Index c = 0; c < g.l; ++c) beta.back().push_back(g.hyper.beta.data()(i, c));
  }
  j["hyper"] = {{"alpha", g.hyper.alpha}, {"nu", g.hyper.nu}, {"m", m}, {"beta", beta}};
  j["mutual_inference"] = {{"rounds", g.schedule.mi_rounds}, {"vae_iters", g.schedule.vae_iters_per_round}};
  const auto& a = cfg.agent;
  j["vae"] = {{"hidden", a.arch.hidden},
              {"likelihood", a.arch.likelihood == PixelLikelihood::Bernoulli ? "bernoulli" : "gaussian"},
              {"lr", a.train.adam.lr},
              {"batch_size", a.train.batch_size},
              {"pretrain_iters", a.pretrain_iters},
              {"perceive", a.perceive_mode == PerceiveMode::Sample ? "sample" : "mean"}};
  ordered_json sweep = ordered_json::array();
  for (const auto& e : cfg.sweep) sweep.push_back({{"condition", condition_name(e.condition)}, {"mi", e.mi}});
  j["sweep"] = sweep;
  return j;
}

void write_manifest(const ExperimentConfig& cfg, const PreparedData& data, const std::vector<TrialOutcome>& outcomes) {
  ordered_json j;
  j["tool"] = "mhng";
  j["version"] = MHNG_VERSION_STRING;
  j["git_rev"] = MHNG_GIT_REV;
  j["rng"] = RngStream::kAlgorithm;
  j["config_dir"] = cfg.source_dir.string();
  j["config_text"] = cfg.source_text;
  j["resolved"] = config_json(cfg);
  j["data"] = {{"objects", data.size()}, {"provenance", data.provenance}};
  ordered_json seeds = ordered_json::array();
  for (int t = 0; t < cfg.trials; ++t) {
    seeds.push_back({{"trial", t},
                     {"seed", cfg.trial_seed(t)},
                     {"agent_a", agent_seed(cfg.trial_seed(t), AgentId::A)},
                     {"agent_b", agent_seed(cfg.trial_seed(t), AgentId::B)}});
  }
  j["trials"] = seeds;
  j["notes"] = {"network weights are gradient-trained point estimates, not posterior draws",
                "perception uses the amortised encoder q(z|o); the sign-selected prior enters only through training"};
  ordered_json runs = ordered_json::array();
  for (const auto& o : outcomes) {
    runs.push_back({{"run", slug(o.entry)},
                    {"trial", o.trial},
                    {"final_ari_a", fmt(o.ari_a)},
                    {"final_ari_b", fmt(o.ari_b)},
                    {"final_kappa", fmt(o.kappa)}});
  }
  j["runs"] = runs;
  write_text(cfg.output / "manifest.json", j.dump(2) + "\n");

  ordered_json timings = ordered_json::array();
  for (const auto& o : outcomes) timings.push_back({{"run", slug(o.entry)}, {"trial", o.trial}, {"seconds", o.seconds}});
  write_text(cfg.output / "timings.json", timings.dump(2) + "\n");
}

}  // namespace

std::vector<ResultRow> aggregate(const std::vector<SweepEntry>& sweep, const std::vector<TrialOutcome>& trials) {
  std::vector<ResultRow> rows;
  for (const auto& e : sweep) {
    std::vector<double> a, b, k;
    for (const auto& t : trials) {
      if (t.entry.condition != e.condition || t.entry.mi != e.mi) continue;
      a.push_back(t.ari_a);
      b.push_back(t.ari_b);
      k.push_back(t.kappa);
    }
    ResultRow r;
    r.entry = e;
    r.trials = static_cast<int>(a.size());
    std::tie(r.ari_a_mean, r.ari_a_std) = mean_std(a);
    std::tie(r.ari_b_mean, r.ari_b_std) = mean_std(b);
    std::tie(r.kappa_mean, r.kappa_std) = mean_std(k);
    rows.push_back(r);
  }
  return rows;
}

void write_results_csv(const fs::path& path, const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << "condition,mi,trials,ari_a_mean,ari_a_std,ari_b_mean,ari_b_std,kappa_mean,kappa_std\n";
  for (const auto& r : rows) {
    os << condition_name(r.entry.condition) << ',' << (r.entry.mi ? "on" : "off") << ',' << r.trials << ','
       << fmt(r.ari_a_mean) << ',' << fmt(r.ari_a_std) << ',' << fmt(r.ari_b_mean) << ',' << fmt(r.ari_b_std) << ','
       << fmt(r.kappa_mean) << ',' << fmt(r.kappa_std) << '\n';
  }
  write_text(path, os.str());
}

GameTrace run_trial(const ExperimentConfig& cfg, const PreparedData& data, const SweepEntry& entry, int trial) {
  return play(cfg, data, entry, trial, nullptr).trace;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const PreparedData data = prepare_data(cfg);
  fs::create_directories(cfg.output);
  log::info("prepared " + std::to_string(data.size()) + " objects (" + data.provenance + ")");

  const std::size_t n_entries = cfg.sweep.size();
  std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(cfg.trials) * n_entries);
  std::atomic<int> next{0};
  std::mutex mu;
  std::exception_ptr failure;

  auto worker = [&] {
    for (;;) {
      const int trial = next.fetch_add(1);
      if (trial >= cfg.trials) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      try {
        std::optional<std::pair<PretrainedVae, PretrainedVae>> pre;
        if (!data.synthetic) {
          auto g = game_for(cfg, data, cfg.sweep.front(), trial);
          pre = pretrain_agents(g, setup_for(cfg, data), data.obs_a, data.obs_b);
        }
        for (std::size_t e = 0; e < n_entries; ++e) {
          const auto& entry = cfg.sweep[e];
          const auto start = std::chrono::steady_clock::now();
          GameResult r = play(cfg, data, entry, trial, pre ? &*pre : nullptr);
          TrialOutcome o;
          o.entry = entry;
          o.trial = trial;
          o.seed = cfg.trial_seed(trial);
          o.ari_a = final_or_nan(r.trace, &IterationRecord::ari_a);
          o.ari_b = final_or_nan(r.trace, &IterationRecord::ari_b);
          o.kappa = final_or_nan(r.trace, &IterationRecord::kappa);
          export_trial(cfg, data, cfg.output / "runs" / slug(entry) / ("trial_" + std::to_string(trial)), r);
          o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          std::lock_guard lock(mu);
          outcomes[static_cast<std::size_t>(trial) * n_entries + e] = o;
          if (progress) progress(o);
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const int n_workers = std::min(cfg.workers, cfg.trials);
  std::vector<std::thread> pool;
  for (int i = 1; i < n_workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  ExperimentResult result;
  result.trials = outcomes;
  result.rows = aggregate(cfg.sweep, outcomes);
  write_results_csv(cfg.output / "results.csv", result.rows);
  write_manifest(cfg, data, outcomes);
  return result;
}

GameTrace serve_experiment(const ExperimentConfig& cfg, AgentId role, const std::string& addr) {
  cfg.validate();
  const auto address = wire::Address::parse(addr);
  const PreparedData data = prepare_data(cfg);
  const auto entry = cfg.sweep.front();
  const auto g = game_for(cfg, data, entry, 0);
  const bool is_a = role == AgentId::A;

  // Each process keeps only its own viewpoint.
  const Matrix& obs = is_a ? data.obs_a : data.obs_b;
  std::optional<Agent> agent;
  if (data.synthetic) {
    AgentOptions opts;
    opts.hyper = g.hyper;
    opts.k = g.k;
    opts.mutual_inference = false;
    agent = Agent::with_latents(role, opts, is_a ? data.z_a : data.z_b, agent_seed(g.seed, role));
  } else {
    const auto setup = setup_for(cfg, data);
    agent = Agent::with_vae(role, make_agent_options(g, setup), setup.arch, obs, agent_seed(g.seed, role));
  }

  wire::Endpoint ep;
  ep.role = is_a ? wire::Role::SpeakerFirst : wire::Role::ListenerFirst;
  if (is_a) {
    ep.stream = wire::connect(address, std::chrono::seconds(60));
  } else {
    wire::Listener listener(address);
    ep.stream = listener.accept(std::chrono::seconds(120));
  }
  wire::Hello mine;
  mine.k = g.k;
  mine.d = g.d;
  mine.seed_echo = g.seed;
  wire::handshake(ep, mine);
  GameTrace trace = wire::run_remote_game(g, ep, *agent, obs, data.truth);

  const auto dir = cfg.output / (std::string("remote_") + (is_a ? "a" : "b"));
  fs::create_directories(dir);
  std::ostringstream t, s;
  trace.write_csv(t);
  trace.write_signs_csv(s);
  write_text(dir / "trace.csv", t.str());
  write_text(dir / "signs.csv", s.str());
  return trace;
}

}  // namespace mhng
