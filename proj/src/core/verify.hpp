#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "game.hpp"

namespace mhng {

struct CheckResult {
  std::string name;
  bool passed = false;
  /// Measured statistic and the bound it is held to.
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct VerifyOptions {
  /// Invert the acceptance log-ratio while the suite runs (mutation check).
  bool flip_acceptance = false;
  long sweeps = 200000;
  int acceptance_instances = 10000;
  long occupancy_steps = 100000;
  int kl_instances = 10000;
  std::uint64_t seed = 7;
};

/// The fixed K=2, D=6, L=2 instance used by the posterior agreement checks.
AgreementInstance reference_agreement_instance();

/// Runs every self-check and returns one row per check, in order. The
/// callback, if set, sees each row as soon as it is computed.
std::vector<CheckResult> run_verify(const VerifyOptions& opts,
                                    const std::function<void(const CheckResult&)>& on_check = {});

}  // namespace mhng
