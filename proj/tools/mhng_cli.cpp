// Command-line front end. Talks to the library only through the C API.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <string>

#include "mhng/mhng.h"

namespace {

int exit_code(mhng_status s) {
  if (s == MHNG_OK) return 0;
  return s == MHNG_E_INVALID_CONFIG || s == MHNG_E_INVALID_ARGUMENT ? 2 : 1;
}

int report(mhng_status s) {
  std::fprintf(stderr, "error: %s [%s]: %s\n", mhng_status_name(s), mhng_last_error_kind(), mhng_last_error());
  return exit_code(s);
}

void print_trial(const mhng_trial_info* t, void*) {
  std::fprintf(stderr, "  %-14s mi=%-3s trial %2d  ARI_A=%.3f ARI_B=%.3f kappa=%.3f  (%.1fs)\n", t->condition,
               t->mi ? "on" : "off", t->trial, t->ari_a, t->ari_b, t->kappa, t->seconds);
}

void print_check(const mhng_check* c, void*) {
  std::printf("%-30s %s  value=%-12.4g bound=%-10.4g %s\n", c->name, c->passed ? "PASS" : "FAIL", c->value,
              c->threshold, c->detail);
  std::fflush(stdout);
}

int cmd_run(const std::string& config, const std::string& output, int workers, int trials, bool quiet) {
  mhng_experiment* exp = nullptr;
  mhng_status s = mhng_experiment_load(config.c_str(), &exp);
  if (s != MHNG_OK) return report(s);
  if (s == MHNG_OK && !output.empty()) s = mhng_experiment_set_output(exp, output.c_str());
  if (s == MHNG_OK && workers > 0) s = mhng_experiment_set_workers(exp, workers);
  if (s == MHNG_OK && trials > 0) s = mhng_experiment_set_trials(exp, trials);
  if (s == MHNG_OK) s = mhng_experiment_run(exp, quiet ? nullptr : print_trial, nullptr);
  if (s != MHNG_OK) {
    mhng_experiment_free(exp);
    return report(s);
  }
  std::printf("%-14s %-4s %-6s %-16s %-16s %-16s\n", "condition", "mi", "trials", "ARI_A", "ARI_B", "kappa");
  for (size_t i = 0; i < mhng_experiment_result_count(exp); ++i) {
    mhng_result_row r;
    mhng_experiment_result(exp, i, &r);
    std::printf("%-14s %-4s %-6d %.3f +- %.3f   %.3f +- %.3f   %.3f +- %.3f\n", r.condition, r.mi ? "on" : "off",
                r.trials, r.ari_a_mean, r.ari_a_std, r.ari_b_mean, r.ari_b_std, r.kappa_mean, r.kappa_std);
  }
  std::printf("artifacts in %s\n", mhng_experiment_output(exp));
  mhng_experiment_free(exp);
  return 0;
}

int cmd_verify(bool quick, const std::string& fault) {
  unsigned flags = quick ? static_cast<unsigned>(MHNG_VERIFY_QUICK) : 0u;
  if (fault == "flip-acceptance") flags |= MHNG_VERIFY_FLIP_ACCEPTANCE;
  mhng_verify_report* rep = nullptr;
  const mhng_status s = mhng_verify(flags, print_check, nullptr, &rep);
  if (s != MHNG_OK) return report(s);
  const int ok = mhng_verify_all_passed(rep);
  std::printf("%s: %zu checks\n", ok ? "all passed" : "FAILED", mhng_verify_check_count(rep));
  mhng_verify_free(rep);
  return ok ? 0 : 1;
}

int cmd_serve(const std::string& role, const std::string& addr, const std::string& config, const std::string& output) {
  mhng_experiment* exp = nullptr;
  mhng_status s = mhng_experiment_load(config.c_str(), &exp);
  if (s != MHNG_OK) return report(s);
  if (!output.empty()) s = mhng_experiment_set_output(exp, output.c_str());
  if (s == MHNG_OK) s = mhng_serve(exp, role == "a" ? MHNG_ROLE_A : MHNG_ROLE_B, addr.c_str());
  mhng_experiment_free(exp);
  if (s != MHNG_OK) return report(s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metropolis-Hastings naming game between two VAE+GMM agents"};
  app.set_version_flag("--version", std::string(mhng_version()));
  app.require_subcommand(1);

  std::string config, output, role, addr, fault;
  int workers = 0, trials = 0;
  bool quick = false, quiet = false;

  auto* run = app.add_subcommand("run", "run every sweep entry and trial of a config");
  run->add_option("config", config, "YAML config or manifest.json")->required();
  run->add_option("-o,--output", output, "output directory (overrides the config)");
  run->add_option("-j,--workers", workers, "parallel trials");
  run->add_option("-n,--trials", trials, "trial count (overrides the config)");
  run->add_flag("-q,--quiet", quiet, "no per-trial lines");

  auto* verify = app.add_subcommand("verify", "run the bundled self-checks");
  verify->add_flag("--quick", quick, "fewer sweeps and instances");
  verify->add_option("--inject-fault", fault, "mutation check")->check(CLI::IsMember({"flip-acceptance"}));

  auto* serve = app.add_subcommand("serve", "play one agent of a two-process game");
  serve->add_option("--role", role, "a connects, b listens")->required()->check(CLI::IsMember({"a", "b"}));
  serve->add_option("--addr", addr, "host:port or unix:/path")->required();
  serve->add_option("config", config, "YAML config")->required();
  serve->add_option("-o,--output", output, "output directory (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*run) return cmd_run(config, output, workers, trials, quiet);
  if (*verify) return cmd_verify(quick, fault);
  return cmd_serve(role, addr, config, output);
}
