/* C API for the M-PAC constrained policy-gradient trainer.
 *
 * All functions return a status code; on failure mpac_last_error()
 * yields a thread-local description. Handles are opaque and must be
 * released with their matching _free function.
 */
#ifndef MPAC_MPAC_H
#define MPAC_MPAC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MPAC_API __declspec(dllexport)
#else
#define MPAC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mpac_status {
  MPAC_OK = 0,
  MPAC_ERR_INVALID_ARGUMENT = 1,
  MPAC_ERR_INVALID_STATE = 2,
  MPAC_ERR_CONFIG = 3,
  MPAC_ERR_PARSE = 4,
  MPAC_ERR_IO = 5,
  MPAC_ERR_NUMERIC = 6,
  MPAC_ERR_INTERNAL = 7
} mpac_status;

MPAC_API const char* mpac_status_name(mpac_status s);
MPAC_API const char* mpac_last_error(void);
MPAC_API const char* mpac_version(void);

/* ---- run configuration ------------------------------------------------- */

typedef struct mpac_config mpac_config;

/* An empty configuration: every field at its default. */
MPAC_API mpac_status mpac_config_create(mpac_config** out);
/* Parse a JSON config file (defaults fill missing fields; validated). */
MPAC_API mpac_status mpac_config_load(const char* path, mpac_config** out);
/* Set a field by dotted path, e.g. "seed", "env", "policy_lr",
 * "preferences.1.threshold". The value is parsed as JSON when possible,
 * else taken as a string. */
MPAC_API mpac_status mpac_config_set(mpac_config* cfg, const char* key,
                                     const char* value);
/* Read back a field as compact JSON text. */
MPAC_API mpac_status mpac_config_get(const mpac_config* cfg, const char* key,
                                     char* buf, size_t buflen);
/* Append one preference object given as JSON, e.g.
 * {"kind":"entropy","threshold":2.0}. */
MPAC_API mpac_status mpac_config_add_preference(mpac_config* cfg,
                                                const char* json_spec);
/* Validate without running. */
MPAC_API mpac_status mpac_config_validate(const mpac_config* cfg);
MPAC_API void mpac_config_free(mpac_config* cfg);

/* ---- training ------------------------------------------------------------ */

typedef struct mpac_metrics_row {
  int32_t epoch;
  uint64_t env_steps;
  double eval_mean;
  double eval_min;
  double eval_max;
} mpac_metrics_row;

typedef void (*mpac_epoch_callback)(const mpac_metrics_row* row, void* user);

typedef struct mpac_train_result {
  int32_t epochs_run;
  uint64_t env_steps;
  double final_eval_mean;
  int32_t aborted; /* nonzero when the run stopped on a numeric failure */
} mpac_train_result;

/* Runs the training loop; writes metrics.csv and checkpoints into the
 * configured output directory. */
MPAC_API mpac_status mpac_train(const mpac_config* cfg, mpac_epoch_callback cb,
                                void* user, mpac_train_result* out);

/* ---- evaluation ----------------------------------------------------------- */

typedef struct mpac_eval_stats {
  double mean;
  double min;
  double max;
} mpac_eval_stats;

/* Evaluate the policy stored in a checkpoint. env_id may be NULL when
 * the checkpoint records its environment. */
MPAC_API mpac_status mpac_evaluate(const char* checkpoint_path, const char* env_id,
                                   uint32_t episodes, uint64_t seed, int greedy,
                                   mpac_eval_stats* out);

/* ---- demonstrations ------------------------------------------------------- */

typedef struct mpac_demos mpac_demos;

/* Record n pairs by running a checkpointed policy. */
MPAC_API mpac_status mpac_demos_record_policy(const char* checkpoint_path,
                                              const char* env_id, uint64_t n,
                                              uint64_t seed, int greedy,
                                              mpac_demos** out,
                                              double* mean_return);
/* Record n pairs from a built-in scripted controller
 * ("pendulum-energy", "chain-right"). */
MPAC_API mpac_status mpac_demos_record_scripted(const char* script_id,
                                                const char* env_id, uint64_t n,
                                                uint64_t seed, mpac_demos** out,
                                                double* mean_return);
MPAC_API mpac_status mpac_demos_load(const char* path, mpac_demos** out);
MPAC_API mpac_status mpac_demos_save(const mpac_demos* demos, const char* path);
MPAC_API uint64_t mpac_demos_count(const mpac_demos* demos);
MPAC_API void mpac_demos_free(mpac_demos* demos);

/* ---- behavior cloning ------------------------------------------------------ */

/* Fit a categorical policy to a demonstration file and write it as a
 * policy checkpoint. hidden_spec is a comma list such as "512,512". */
MPAC_API mpac_status mpac_behavior_clone(const char* demos_path,
                                         const char* out_checkpoint,
                                         const char* hidden_spec, uint32_t epochs,
                                         uint32_t batch_size, double lr,
                                         double dropout, uint64_t seed);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MPAC_MPAC_H */
