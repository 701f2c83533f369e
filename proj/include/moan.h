#ifndef MOAN_H
#define MOAN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define MOAN_API __attribute__((visibility("default")))
#else
#define MOAN_API
#endif

typedef enum moan_status {
  MOAN_OK = 0,
  MOAN_ERR_INVALID_ARGUMENT = 1,
  MOAN_ERR_DIMENSION_MISMATCH = 2,
  MOAN_ERR_NON_FINITE = 3,
  MOAN_ERR_PARSE = 4,
  MOAN_ERR_IO = 5,
  MOAN_ERR_FORMAT_MISMATCH = 6,
  MOAN_ERR_MISSING_ARTIFACT = 7,
  MOAN_ERR_RUNTIME = 8,
  MOAN_ERR_NULL_ARGUMENT = 9
} moan_status;

typedef struct moan_config moan_config;
typedef struct moan_dataset moan_dataset;

/* Called once per progress line; user is passed through untouched. */
typedef void (*moan_log_fn)(const char* line, void* user);

MOAN_API const char* moan_version(void);
MOAN_API const char* moan_status_name(moan_status status);
/* Message of the last failing call on this thread; "" after a success. */
MOAN_API const char* moan_last_error(void);
/* Process-wide; pass NULL to silence. */
MOAN_API void moan_set_log(moan_log_fn fn, void* user);

/* Strings returned through char** are heap-allocated; release them here. */
MOAN_API void moan_string_free(char* s);

/* ---- configuration ---- */

MOAN_API moan_status moan_config_default(moan_config** out);
MOAN_API moan_status moan_config_load(const char* path, moan_config** out);
MOAN_API moan_status moan_config_parse(const char* text, moan_config** out);
MOAN_API void moan_config_free(moan_config* cfg);
/* key is "section.key", e.g. "model.alpha". */
MOAN_API moan_status moan_config_set(moan_config* cfg, const char* key, const char* value);
MOAN_API moan_status moan_config_get(const moan_config* cfg, const char* key, char** value);
MOAN_API moan_status moan_config_validate(const moan_config* cfg);
MOAN_API moan_status moan_config_dump(const moan_config* cfg, char** text);
MOAN_API moan_status moan_config_hash(const moan_config* cfg, char** hash);
/* Markdown table of every key, default and meaning. */
MOAN_API moan_status moan_config_reference(char** text);

/* ---- pipeline ---- */

/* Writes (or reuses) the dataset described by the config; *path receives its
   location. train_behavior != 0 trains missing behavior policies online. */
MOAN_API moan_status moan_gen_data(const moan_config* cfg, int train_behavior, char** path);
/* Stage 1 only. */
MOAN_API moan_status moan_train_model(const moan_config* cfg, char** run_dir);
/* Stage 2 only; requires the stage-1 model of the same config. */
MOAN_API moan_status moan_train_policy(const moan_config* cfg, double* final_return, char** run_dir);
/* Both stages, reusing a cached stage-1 model. */
MOAN_API moan_status moan_run(const moan_config* cfg, double* final_return, double* behavior_return, char** run_dir);
MOAN_API moan_status moan_eval(const moan_config* cfg, const char* agent_checkpoint, int episodes, uint64_t seed,
                               double* mean, double* stdev);
/* valid receives 1 when every artifact in the manifest checks out; why holds the reason otherwise. */
MOAN_API moan_status moan_verify_run(const char* run_dir, int* valid, char** why);

/* param is "alpha" or "eta". */
MOAN_API moan_status moan_sweep(const moan_config* cfg, const char* param, const double* values, size_t n_values,
                                const uint64_t* seeds, size_t n_seeds, const char* sweep_dir, int threads,
                                char** summary_csv);

typedef struct moan_bound_summary {
  int trials;
  double literal_hold_rate;
  double c_star_max;
  double c_star_median;
  double value_gap_max_error;
  int all_c_star_finite;
} moan_bound_summary;

/* out_csv may be NULL. */
MOAN_API moan_status moan_bound_check(uint64_t seed, int trials, const char* out_csv, moan_bound_summary* out);

typedef struct moan_gradcheck_summary {
  double disc;
  double gen_alpha0;
  double gen_alpha1;
  double critic;
  double actor;
  double temperature;
  double max;
} moan_gradcheck_summary;

MOAN_API moan_status moan_gradcheck(uint64_t seed, int nets, moan_gradcheck_summary* out);

/* ---- canonical datasets ---- */

typedef struct moan_dataset_info {
  size_t count;
  int d_s;
  int d_a;
  double reward_mean;
  double reward_std;
} moan_dataset_info;

MOAN_API moan_status moan_dataset_create(const char* env_id, int d_s, int d_a, moan_dataset** out);
MOAN_API moan_status moan_dataset_load(const char* path, moan_dataset** out);
MOAN_API void moan_dataset_free(moan_dataset* ds);
MOAN_API moan_status moan_dataset_info_get(const moan_dataset* ds, moan_dataset_info* out);
MOAN_API moan_status moan_dataset_env_id(const moan_dataset* ds, char** env_id);
MOAN_API moan_status moan_dataset_push(moan_dataset* ds, const double* s, const double* a, const double* s_next,
                                       double r, int done);
/* s and s_next hold d_s floats, a holds d_a; any pointer may be NULL. */
MOAN_API moan_status moan_dataset_record(const moan_dataset* ds, size_t i, float* s, float* a, float* s_next, float* r,
                                         int* done);
/* Recomputes the header statistics before writing. */
MOAN_API moan_status moan_dataset_save(moan_dataset* ds, const char* path);

#ifdef __cplusplus
}
#endif

#endif
