#include "mhng/mhng.h"

#include <exception>
#include <functional>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "experiment.hpp"
#include "metrics.hpp"
#include "transport.hpp"
#include "verify.hpp"

#ifndef MHNG_VERSION_STRING
#define MHNG_VERSION_STRING "0.0.0"
#endif

struct mhng_experiment {
  mhng::ExperimentConfig config;
  std::string output;
  std::vector<mhng::ResultRow> rows;
  std::vector<std::string> names;
};

struct mhng_verify_report {
  std::vector<mhng::CheckResult> checks;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_kind;

mhng_status status_for(mhng::ErrorCode code) {
  using mhng::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidConfig: return MHNG_E_INVALID_CONFIG;
    case ErrorCode::Io: return MHNG_E_IO;
    case ErrorCode::BadMagic:
    case ErrorCode::TruncatedFile:
    case ErrorCode::CountMismatch:
    case ErrorCode::InsufficientClassCount:
    case ErrorCode::UnreadableImage:
    case ErrorCode::EmptyClass: return MHNG_E_DATA;
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::NumericalFailure:
    case ErrorCode::AllNegInfinity:
    case ErrorCode::InvalidDof: return MHNG_E_NUMERICAL;
    case ErrorCode::HandshakeMismatch: return MHNG_E_HANDSHAKE;
    case ErrorCode::MalformedFrame:
    case ErrorCode::UnknownKind:
    case ErrorCode::OversizeFrame:
    case ErrorCode::PeerDisconnected:
    case ErrorCode::Timeout: return MHNG_E_TRANSPORT;
    default: return MHNG_E_INVALID_ARGUMENT;
  }
}

mhng_status fail(mhng_status status, std::string kind, std::string message) {
  last_kind = std::move(kind);
  last_error = std::move(message);
  return status;
}

template <typename F>
mhng_status guarded(F&& f) {
  try {
    last_error.clear();
    last_kind.clear();
    f();
    return MHNG_OK;
  } catch (const mhng::Error& e) {
    return fail(status_for(e.code()), std::string(mhng::error_code_name(e.code())), e.detail());
  } catch (const std::bad_alloc&) {
    return fail(MHNG_E_INTERNAL, "OutOfMemory", "allocation failed");
  } catch (const std::exception& e) {
    return fail(MHNG_E_INTERNAL, "Internal", e.what());
  } catch (...) {
    return fail(MHNG_E_INTERNAL, "Internal", "unknown exception");
  }
}

mhng_status null_arg(const char* what) { return fail(MHNG_E_INVALID_ARGUMENT, "InvalidArgument", what); }

}  // namespace

extern "C" {

const char* mhng_version(void) { return MHNG_VERSION_STRING; }

const char* mhng_status_name(mhng_status status) {
  switch (status) {
    case MHNG_OK: return "ok";
    case MHNG_E_INVALID_ARGUMENT: return "invalid_argument";
    case MHNG_E_INVALID_CONFIG: return "invalid_config";
    case MHNG_E_IO: return "io";
    case MHNG_E_DATA: return "data";
    case MHNG_E_NUMERICAL: return "numerical";
    case MHNG_E_TRANSPORT: return "transport";
    case MHNG_E_HANDSHAKE: return "handshake";
    case MHNG_E_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* mhng_last_error(void) { return last_error.c_str(); }
const char* mhng_last_error_kind(void) { return last_kind.c_str(); }

mhng_status mhng_experiment_load(const char* path, mhng_experiment** out) {
  if (path == nullptr || out == nullptr) return null_arg("path and out are required");
  *out = nullptr;
  return guarded([&] {
    auto exp = std::make_unique<mhng_experiment>();
    exp->config = mhng::load_experiment(path);
    exp->output = exp->config.output.string();
    *out = exp.release();
  });
}

void mhng_experiment_free(mhng_experiment* exp) { delete exp; }

mhng_status mhng_experiment_set_output(mhng_experiment* exp, const char* dir) {
  if (exp == nullptr || dir == nullptr || *dir == '\0') return null_arg("experiment and a non-empty dir are required");
  exp->config.output = dir;
  exp->output = dir;
  return MHNG_OK;
}

mhng_status mhng_experiment_set_workers(mhng_experiment* exp, int workers) {
  if (exp == nullptr || workers < 1) return null_arg("workers must be >= 1");
  exp->config.workers = workers;
  return MHNG_OK;
}

mhng_status mhng_experiment_set_trials(mhng_experiment* exp, int trials) {
  if (exp == nullptr || trials < 2) return null_arg("trials must be >= 2");
  exp->config.trials = trials;
  return MHNG_OK;
}

mhng_status mhng_experiment_run(mhng_experiment* exp, mhng_progress_fn progress, void* user) {
  if (exp == nullptr) return null_arg("experiment is required");
  return guarded([&] {
    mhng::ProgressFn fn;
    if (progress != nullptr) {
      fn = [&](const mhng::TrialOutcome& o) {
        const std::string name(mhng::condition_name(o.entry.condition));
        mhng_trial_info info{name.c_str(), o.entry.mi ? 1 : 0, o.trial, o.seed, o.ari_a, o.ari_b, o.kappa, o.seconds};
        progress(&info, user);
      };
    }
    auto result = mhng::run_experiment(exp->config, fn);
    exp->rows = std::move(result.rows);
    exp->names.clear();
    for (const auto& r : exp->rows) exp->names.emplace_back(mhng::condition_name(r.entry.condition));
  });
}

size_t mhng_experiment_result_count(const mhng_experiment* exp) { return exp == nullptr ? 0 : exp->rows.size(); }

mhng_status mhng_experiment_result(const mhng_experiment* exp, size_t index, mhng_result_row* out) {
  if (exp == nullptr || out == nullptr) return null_arg("experiment and out are required");
  if (index >= exp->rows.size()) return fail(MHNG_E_INVALID_ARGUMENT, "IndexOutOfRange", "result index out of range");
  const auto& r = exp->rows[index];
  *out = {exp->names[index].c_str(), r.entry.mi ? 1 : 0, r.trials, r.ari_a_mean, r.ari_a_std,
          r.ari_b_mean,              r.ari_b_std,         r.kappa_mean, r.kappa_std};
  return MHNG_OK;
}

const char* mhng_experiment_output(const mhng_experiment* exp) { return exp == nullptr ? "" : exp->output.c_str(); }

mhng_status mhng_serve(const mhng_experiment* exp, mhng_role role, const char* addr) {
  if (exp == nullptr || addr == nullptr) return null_arg("experiment and addr are required");
  if (role != MHNG_ROLE_A && role != MHNG_ROLE_B) return null_arg("role must be A or B");
  return guarded([&] {
    try {
      mhng::wire::Address::parse(addr);
    } catch (const mhng::Error& e) {
      throw mhng::Error(mhng::ErrorCode::InvalidConfig, "addr: " + e.detail());
    }
    mhng::serve_experiment(exp->config, role == MHNG_ROLE_A ? mhng::AgentId::A : mhng::AgentId::B, addr);
  });
}

mhng_status mhng_verify(unsigned flags, mhng_check_fn on_check, void* user, mhng_verify_report** out) {
  if (out == nullptr) return null_arg("out is required");
  *out = nullptr;
  return guarded([&] {
    mhng::VerifyOptions opts;
    opts.flip_acceptance = (flags & MHNG_VERIFY_FLIP_ACCEPTANCE) != 0;
    if ((flags & MHNG_VERIFY_QUICK) != 0) {
      opts.sweeps = 40000;
      opts.acceptance_instances = 1000;
      opts.occupancy_steps = 100000;
      opts.kl_instances = 1000;
    }
    std::function<void(const mhng::CheckResult&)> cb;
    if (on_check != nullptr) {
      cb = [&](const mhng::CheckResult& c) {
        mhng_check view{c.name.c_str(), c.passed ? 1 : 0, c.value, c.threshold, c.detail.c_str()};
        on_check(&view, user);
      };
    }
    auto report = std::make_unique<mhng_verify_report>();
    report->checks = mhng::run_verify(opts, cb);
    *out = report.release();
  });
}

size_t mhng_verify_check_count(const mhng_verify_report* report) { return report == nullptr ? 0 : report->checks.size(); }

mhng_status mhng_verify_check(const mhng_verify_report* report, size_t index, mhng_check* out) {
  if (report == nullptr || out == nullptr) return null_arg("report and out are required");
  if (index >= report->checks.size()) return fail(MHNG_E_INVALID_ARGUMENT, "IndexOutOfRange", "check index out of range");
  const auto& c = report->checks[index];
  *out = {c.name.c_str(), c.passed ? 1 : 0, c.value, c.threshold, c.detail.c_str()};
  return MHNG_OK;
}

int mhng_verify_all_passed(const mhng_verify_report* report) {
  if (report == nullptr) return 0;
  for (const auto& c : report->checks) {
    if (!c.passed) return 0;
  }
  return 1;
}

void mhng_verify_free(mhng_verify_report* report) { delete report; }

mhng_status mhng_ari(const int* a, const int* b, size_t n, double* out) {
  if (a == nullptr || b == nullptr || out == nullptr) return null_arg("a, b and out are required");
  return guarded([&] { *out = mhng::adjusted_rand_index(mhng::LabelVector(a, a + n), mhng::LabelVector(b, b + n)); });
}

mhng_status mhng_kappa(const int* a, const int* b, size_t n, double* out) {
  if (a == nullptr || b == nullptr || out == nullptr) return null_arg("a, b and out are required");
  return guarded([&] { *out = mhng::cohen_kappa(mhng::LabelVector(a, a + n), mhng::LabelVector(b, b + n)); });
}

const char* mhng_kappa_band(double kappa) { return mhng::kappa_band(kappa).data(); }

}  // extern "C"
