/* C interface to the naming-game library. All functions return a status;
 * on failure mhng_last_error() describes the problem for the calling thread. */
#ifndef MHNG_MHNG_H
#define MHNG_MHNG_H

#include <stddef.h>
#include <stdint.h>

#if defined(MHNG_BUILDING)
#define MHNG_API __attribute__((visibility("default")))
#else
#define MHNG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mhng_status {
  MHNG_OK = 0,
  MHNG_E_INVALID_ARGUMENT = 1,
  MHNG_E_INVALID_CONFIG = 2,
  MHNG_E_IO = 3,
  MHNG_E_DATA = 4,
  MHNG_E_NUMERICAL = 5,
  MHNG_E_TRANSPORT = 6,
  MHNG_E_HANDSHAKE = 7,
  MHNG_E_INTERNAL = 8
} mhng_status;

MHNG_API const char* mhng_version(void);
MHNG_API const char* mhng_status_name(mhng_status status);
/* Message of the last failed call on this thread; empty after success. */
MHNG_API const char* mhng_last_error(void);
/* Name of the underlying error kind, e.g. "HandshakeMismatch". */
MHNG_API const char* mhng_last_error_kind(void);

/* ---- experiments ---- */

typedef struct mhng_experiment mhng_experiment;

typedef struct mhng_result_row {
  const char* condition; /* valid while the experiment lives */
  int mi;
  int trials;
  double ari_a_mean, ari_a_std;
  double ari_b_mean, ari_b_std;
  double kappa_mean, kappa_std;
} mhng_result_row;

typedef struct mhng_trial_info {
  const char* condition;
  int mi;
  int trial;
  uint64_t seed;
  double ari_a, ari_b, kappa;
  double seconds;
} mhng_trial_info;

typedef void (*mhng_progress_fn)(const mhng_trial_info* info, void* user);

/* Loads a YAML config, or the config recorded in a manifest.json. */
MHNG_API mhng_status mhng_experiment_load(const char* path, mhng_experiment** out);
MHNG_API void mhng_experiment_free(mhng_experiment* exp);
MHNG_API mhng_status mhng_experiment_set_output(mhng_experiment* exp, const char* dir);
MHNG_API mhng_status mhng_experiment_set_workers(mhng_experiment* exp, int workers);
MHNG_API mhng_status mhng_experiment_set_trials(mhng_experiment* exp, int trials);
MHNG_API mhng_status mhng_experiment_run(mhng_experiment* exp, mhng_progress_fn progress, void* user);
MHNG_API size_t mhng_experiment_result_count(const mhng_experiment* exp);
MHNG_API mhng_status mhng_experiment_result(const mhng_experiment* exp, size_t index, mhng_result_row* out);
MHNG_API const char* mhng_experiment_output(const mhng_experiment* exp);

/* ---- two-process play ---- */

typedef enum mhng_role { MHNG_ROLE_A = 0, MHNG_ROLE_B = 1 } mhng_role;

/* Plays trial 0 of the first sweep entry as one agent. Role B listens on
 * addr ("host:port" or "unix:/path"); role A connects to it. */
MHNG_API mhng_status mhng_serve(const mhng_experiment* exp, mhng_role role, const char* addr);

/* ---- self-check suite ---- */

enum {
  MHNG_VERIFY_FLIP_ACCEPTANCE = 1u, /* mutation check: invert the acceptance ratio */
  MHNG_VERIFY_QUICK = 2u            /* fewer sweeps and instances */
};

typedef struct mhng_verify_report mhng_verify_report;

typedef struct mhng_check {
  const char* name;
  int passed;
  double value;
  double threshold;
  const char* detail;
} mhng_check;

typedef void (*mhng_check_fn)(const mhng_check* check, void* user);

MHNG_API mhng_status mhng_verify(unsigned flags, mhng_check_fn on_check, void* user, mhng_verify_report** out);
MHNG_API size_t mhng_verify_check_count(const mhng_verify_report* report);
MHNG_API mhng_status mhng_verify_check(const mhng_verify_report* report, size_t index, mhng_check* out);
MHNG_API int mhng_verify_all_passed(const mhng_verify_report* report);
MHNG_API void mhng_verify_free(mhng_verify_report* report);

/* ---- metrics ---- */

MHNG_API mhng_status mhng_ari(const int* a, const int* b, size_t n, double* out);
MHNG_API mhng_status mhng_kappa(const int* a, const int* b, size_t n, double* out);
MHNG_API const char* mhng_kappa_band(double kappa);

#ifdef __cplusplus
}
#endif

#endif
