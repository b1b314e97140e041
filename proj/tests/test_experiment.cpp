#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "data.hpp"
#include "experiment.hpp"
#include "support.hpp"

using namespace mhng;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("mhng_exp_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const char* kSynthetic = R"(name: t
seed: 5
trials: 2
output: out
dataset: {kind: synthetic, d: 30}
game: {K: 3, T: 4, L: 2}
hyper: {alpha: 0.1}
sweep:
  - {condition: mh, mi: false}
  - {condition: no_comm, mi: false}
)";

std::string field_of(const std::string& text, const fs::path& dir) {
  try {
    parse_experiment(text, dir);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
    return e.detail().substr(0, e.detail().find(':'));
  }
  return "<accepted>";
}

}  // namespace

TEST_CASE("config errors name the field") {
  TempDir dir("cfg");
  CHECK(field_of("dataset: {kind: mnist, images: nope, labels: nope2}\n", dir.path) == "dataset.images");
  CHECK(field_of("dataset: {kind: synthetic}\nbogus: 1\n", dir.path) == "bogus");
  CHECK(field_of("dataset: {kind: synthetic}\ngame: {K: 3, Q: 1}\n", dir.path) == "game.Q");
  CHECK(field_of("dataset: {kind: synthetic}\ntrials: 1\n", dir.path) == "trials");
  CHECK(field_of("dataset: {kind: synthetic}\ngame: {T: abc}\n", dir.path) == "game.T");
  CHECK(field_of("dataset: {kind: synthetic}\nsweep: [{condition: telepathy}]\n", dir.path) == "sweep[0].condition");
  CHECK(field_of("dataset: {kind: synthetic}\nhyper: {nu: 0.5}\n", dir.path) == "hyper.nu");
  CHECK(field_of("dataset: {kind: synthetic}\nhyper: {beta: -1}\n", dir.path) == "hyper.beta");
  CHECK(field_of("dataset: {kind: folder, root: missing_dir}\n", dir.path) == "dataset.root");
  CHECK(field_of("game: {K: 3}\n", dir.path) == "dataset");
  CHECK(field_of(kSynthetic, dir.path) == "<accepted>");
}

TEST_CASE("paths resolve against the config directory") {
  TempDir dir("paths");
  const auto cfg = parse_experiment(kSynthetic, dir.path);
  CHECK(cfg.output == dir.path / "out");
  CHECK(cfg.sweep.size() == 2);
  CHECK(cfg.game.k == 3);
  CHECK(cfg.game.hyper.alpha == 0.1);
}

TEST_CASE("reruns and manifest replays are byte-identical") {
  TempDir dir("rerun");
  std::ofstream(dir.path / "c.yaml") << kSynthetic;
  ExperimentConfig cfg = load_experiment(dir.path / "c.yaml");
  cfg.output = dir.path / "one";
  run_experiment(cfg);
  cfg.output = dir.path / "two";
  run_experiment(cfg);
  ExperimentConfig replay = load_experiment(dir.path / "one" / "manifest.json");
  replay.output = dir.path / "three";
  run_experiment(replay);

  for (const char* rel : {"results.csv", "runs/mh_nomi/trial_0/trace.csv", "runs/mh_nomi/trial_1/signs.csv",
                          "runs/no_comm_nomi/trial_1/latents_b.csv", "runs/mh_nomi/trial_0/confusion_a.csv"}) {
    CAPTURE(rel);
    const auto a = slurp(dir.path / "one" / rel);
    CHECK_FALSE(a.empty());
    CHECK(a == slurp(dir.path / "two" / rel));
    CHECK(a == slurp(dir.path / "three" / rel));
  }
  const auto manifest = slurp(dir.path / "one" / "manifest.json");
  CHECK(manifest.find("\"config_text\"") != std::string::npos);
  CHECK(manifest.find("\"git_rev\"") != std::string::npos);
}

TEST_CASE("image experiment writes every artifact") {
  TempDir dir("images");
  // Twenty 28x28 images of two classes.
  ImageSet set;
  RngStream rng(3);
  for (int i = 0; i < 20; ++i) {
    Image img{28, 28, 1, std::vector<double>(784, 0.0)};
    const int label = i % 2;
    for (int r = 6; r < 22; ++r)
      for (int c = 0; c < 28; ++c)
        if ((label == 0 && c > 12 && c < 16) || (label == 1 && r > 12 && r < 16)) img.at(r, c) = 0.8 + 0.2 * rng.uniform();
    set.images.push_back(img);
    set.labels.push_back(label);
  }
  write_mnist_idx(set, dir.path / "img.idx", dir.path / "lab.idx");
  std::ofstream(dir.path / "c.yaml") << R"(seed: 1
trials: 2
output: out
dataset: {kind: mnist, images: img.idx, labels: lab.idx, classes: [0, 1], per_class: 8}
game: {K: 2, T: 2, L: 2}
mutual_inference: {rounds: 1, vae_iters: 2}
vae: {hidden: [16], pretrain_iters: 5}
exports: {checkpoints: true}
sweep: [{condition: mh}]
)";
  const auto cfg = load_experiment(dir.path / "c.yaml");
  const auto result = run_experiment(cfg);
  CHECK(result.rows.size() == 1);
  CHECK(result.trials.size() == 2);
  const fs::path run = dir.path / "out" / "runs" / "mh_mi" / "trial_1";
  for (const char* f : {"trace.csv", "signs.csv", "confusion_a.csv", "confusion_b.csv", "assignment_a.json",
                        "latents_a.csv", "latents_b.csv", "recall_a_0.pgm", "recall_a_1.pgm", "recall_b_0.pgm",
                        "recall_b_1.pgm", "agent_a.ckpt", "agent_b.ckpt"}) {
    CAPTURE(f);
    CHECK(fs::exists(run / f));
  }
  const Image recall = read_image(run / "recall_b_1.pgm");
  CHECK(recall.height == 28);
  CHECK(fs::exists(dir.path / "out" / "results.csv"));
  CHECK(fs::exists(dir.path / "out" / "manifest.json"));
  // Latent export: header plus one row per object.
  std::ifstream lat(run / "latents_a.csv");
  int lines = 0;
  for (std::string line; std::getline(lat, line);) ++lines;
  CHECK(lines == 17);
}

TEST_CASE("aggregate uses the sample standard deviation") {
  std::vector<TrialOutcome> t(3);
  const double values[] = {0.5, 0.7, 0.9};
  for (int i = 0; i < 3; ++i) {
    t[i].trial = i;
    t[i].ari_a = t[i].ari_b = t[i].kappa = values[i];
  }
  const auto rows = aggregate({SweepEntry{}}, t);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].ari_a_mean == doctest::Approx(0.7));
  CHECK(rows[0].ari_a_std == doctest::Approx(0.2));
  CHECK(rows[0].trials == 3);
}
