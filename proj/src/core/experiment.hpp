#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "data.hpp"
#include "game.hpp"

namespace mhng {

struct DatasetSpec {
  enum class Kind { Mnist, Folder, Synthetic };
  Kind kind = Kind::Mnist;
  std::filesystem::path images;
  std::filesystem::path labels;
  std::filesystem::path root;
  int height = 28;
  int width = 28;
  /// Empty means every class present.
  std::vector<int> classes;
  /// 0 means keep every image.
  std::size_t per_class = 0;
  /// Object count for synthetic data.
  std::size_t synthetic_d = 60;
};

struct SweepEntry {
  Condition condition = Condition::Mh;
  bool mi = true;
};

struct ExportOptions {
  bool recalls = true;
  bool latents = true;
  bool confusion = true;
  bool checkpoints = false;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 1;
  int trials = 10;
  int workers = 1;
  std::filesystem::path output = "out";
  DatasetSpec dataset;
  double rotation_a = 0.0;
  double rotation_b = 45.0;
  /// condition and mi_enabled are overwritten per sweep entry.
  GameConfig game;
  AgentSetup agent;
  std::vector<SweepEntry> sweep;
  ExportOptions exports;
  /// The file as written, echoed into the manifest.
  std::string source_text;
  std::filesystem::path source_dir;

  /// Throws InvalidConfig naming the offending field.
  void validate() const;
  std::uint64_t trial_seed(int trial) const;
};

/// Parses YAML text; relative dataset paths resolve against base_dir.
ExperimentConfig parse_experiment(const std::string& text, const std::filesystem::path& base_dir);
/// Loads a YAML config, or the config echoed inside a manifest.json.
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// One agent's view of the dataset.
struct PreparedData {
  bool synthetic = false;
  Matrix obs_a;
  Matrix obs_b;
  std::vector<Vector> z_a;
  std::vector<Vector> z_b;
  LabelVector truth;
  int height = 0;
  int width = 0;
  int channels = 1;
  std::string provenance;

  std::size_t size() const noexcept { return truth.size(); }
};

PreparedData prepare_data(const ExperimentConfig& cfg);

struct ResultRow {
  SweepEntry entry;
  int trials = 0;
  double ari_a_mean = 0, ari_a_std = 0;
  double ari_b_mean = 0, ari_b_std = 0;
  double kappa_mean = 0, kappa_std = 0;
};

struct TrialOutcome {
  SweepEntry entry;
  int trial = 0;
  std::uint64_t seed = 0;
  double ari_a = 0, ari_b = 0, kappa = 0;
  double seconds = 0;
};

struct ExperimentResult {
  std::vector<TrialOutcome> trials;
  std::vector<ResultRow> rows;
};

/// Per-trial callback, invoked from worker threads under a lock.
using ProgressFn = std::function<void(const TrialOutcome&)>;

/// Runs every sweep entry for every trial and writes all artifacts under
/// cfg.output. Trials fan out over cfg.workers threads; the VAE warm-up is
/// shared by every sweep entry of a trial.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress = {});

std::vector<ResultRow> aggregate(const std::vector<SweepEntry>& sweep, const std::vector<TrialOutcome>& trials);
void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);

/// Runs trial 0 of the first sweep entry as one side of a two-process game.
/// Role A connects to addr, role B listens on it.
GameTrace serve_experiment(const ExperimentConfig& cfg, AgentId role, const std::string& addr);

/// Plays the same trial in-process, for comparison with a served pair.
GameTrace run_trial(const ExperimentConfig& cfg, const PreparedData& data, const SweepEntry& entry, int trial);

}  // namespace mhng
