/* C interface to the implicit GNN library. Every call returns a status code;
 * on failure ignn_last_error() describes the problem for the calling thread.
 * Handles are opaque and owned by the caller, who releases them with the
 * matching *_destroy function (NULL is accepted). */
#ifndef IGNN_H
#define IGNN_H

#include <stddef.h>
#include <stdint.h>

#if defined(__GNUC__)
#define IGNN_API __attribute__((visibility("default")))
#else
#define IGNN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ignn_status {
  IGNN_OK = 0,
  IGNN_ERR_GENERIC = 1,
  IGNN_ERR_CONFIG = 2,
  IGNN_ERR_CONVERGENCE = 3,
  IGNN_ERR_IO = 4,
  IGNN_ERR_SHAPE = 5,
  IGNN_ERR_DOMAIN = 6,
  IGNN_ERR_NUMERIC = 7,
  IGNN_ERR_PARSE = 8,
  IGNN_ERR_PRECONDITION = 9,
  IGNN_ERR_INVALID_ARGUMENT = 10
} ignn_status;

typedef struct ignn_config ignn_config;
typedef struct ignn_dataset ignn_dataset;
typedef struct ignn_model ignn_model;
typedef struct ignn_solver ignn_solver;

/* Message of the last failed call on this thread, "" if none. */
IGNN_API const char* ignn_last_error(void);
IGNN_API const char* ignn_status_name(ignn_status status);

/* Configuration: flat key=value text. Unknown keys are config errors. */
IGNN_API ignn_status ignn_config_default(ignn_config** out);
IGNN_API ignn_status ignn_config_load(const char* path, ignn_config** out);
IGNN_API ignn_status ignn_config_set(ignn_config* config, const char* key, const char* value);
/* Copies the value (default if unset) into buf, truncating to size - 1. */
IGNN_API ignn_status ignn_config_get(const ignn_config* config, const char* key, char* buf, size_t size);
/* 16 hex digits plus the terminator. */
IGNN_API ignn_status ignn_config_hash(const ignn_config* config, char out[17]);
IGNN_API void ignn_config_destroy(ignn_config* config);

/* spec is a dataset directory, "synth:citeseer" or "synth:chain[:chains:len:dim]". */
IGNN_API ignn_status ignn_dataset_open(const char* spec, uint64_t seed, ignn_dataset** out);
IGNN_API ignn_status ignn_dataset_info(const ignn_dataset* data, size_t* nodes, size_t* features, size_t* classes,
                              size_t* edges);
IGNN_API void ignn_dataset_destroy(ignn_dataset* data);

/* Fresh model sized for the dataset from nhid, activation and kappa. */
IGNN_API ignn_status ignn_model_create(const ignn_config* config, const ignn_dataset* data, uint64_t seed,
                              ignn_model** out);
IGNN_API ignn_status ignn_model_load(const char* path, ignn_model** out);
IGNN_API ignn_status ignn_model_save(const ignn_model* model, const char* path);
IGNN_API ignn_status ignn_model_param_count(const ignn_model* model, size_t* out);
IGNN_API void ignn_model_destroy(ignn_model* model);

/* Fresh neural solver paired with a model. */
IGNN_API ignn_status ignn_solver_create(const ignn_config* config, const ignn_model* model, uint64_t seed,
                               ignn_solver** out);
IGNN_API ignn_status ignn_solver_load(const char* path, ignn_solver** out);
IGNN_API ignn_status ignn_solver_save(const ignn_solver* solver, const char* path);
IGNN_API ignn_status ignn_solver_param_count(const ignn_solver* solver, size_t* out);
IGNN_API void ignn_solver_destroy(ignn_solver* solver);

/* Log paths may be NULL. Accuracy outputs may be NULL. */

/* Task training with classic Anderson as the frozen solver for `epochs`. */
IGNN_API ignn_status ignn_train_model(ignn_model* model, const ignn_dataset* data, const ignn_config* config,
                             const char* log_path, double* test_accuracy);
/* solver_steps Adam steps against Z* of the frozen model. */
IGNN_API ignn_status ignn_train_solver(ignn_solver* solver, const ignn_model* model, const ignn_dataset* data,
                              const ignn_config* config, const char* log_path);
IGNN_API ignn_status ignn_alternate_train(ignn_model* model, ignn_solver* solver, const ignn_dataset* data,
                                 const ignn_config* config, const char* log_path, double* test_accuracy);

/* solver_name is "picard", "anderson" or "neural" (the last needs solver).
 * Any output pointer may be NULL. */
IGNN_API ignn_status ignn_solve(const ignn_model* model, const ignn_solver* solver, const ignn_dataset* data,
                       const char* solver_name, double tol, size_t max_iter, size_t* f_evals,
                       double* residual, double* test_accuracy);

/* Budgets 0..2K for every solver; CSV with a seed/dataset/config header. */
IGNN_API ignn_status ignn_bench_pareto(const ignn_model* model, const ignn_solver* solver, const ignn_dataset* data,
                              const ignn_config* config, const char* dataset_name, const char* csv_path);
/* Residual per step for every solver, up to 2K steps. */
IGNN_API ignn_status ignn_bench_trace(const ignn_model* model, const ignn_solver* solver, const ignn_dataset* data,
                             const ignn_config* config, const char* csv_path);
/* Reads a training log and writes the time and parameter summary as JSON.
 * ratio_out may be NULL. */
IGNN_API ignn_status ignn_bench_overhead(const char* log_path, const char* json_path, double* ratio_out);

#ifdef __cplusplus
}
#endif

#endif
