/* C interface to the drrl library.
 *
 * Every function returns a drrl_status; on failure the message is available
 * from drrl_last_error() on the calling thread until the next call. Objects
 * are opaque handles released with the matching *_free function, and strings
 * returned through char** out-parameters are released with drrl_string_free.
 * Configuration and results travel as JSON text. */
#ifndef DRRL_DRRL_H_
#define DRRL_DRRL_H_

#include <stddef.h>
#include <stdint.h>

#if defined(DRRL_BUILDING_LIBRARY)
#define DRRL_API __attribute__((visibility("default")))
#else
#define DRRL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum drrl_status {
  DRRL_OK = 0,
  DRRL_ERR_ARGUMENT = 1,
  DRRL_ERR_PARSE = 2,
  DRRL_ERR_IO = 3,
  DRRL_ERR_INFEASIBLE = 4,
  DRRL_ERR_DEGENERATE_BATCH = 5,
  DRRL_ERR_TRAINING_DIVERGED = 6,
  DRRL_ERR_MISSING_TRUTH = 7,
  DRRL_ERR_SEPARATION = 8,
  DRRL_ERR_EVALUATION = 9,
  DRRL_ERR_SEARCH_FAILED = 10,
  DRRL_ERR_INTERNAL = 11
} drrl_status;

typedef struct drrl_dataset drrl_dataset;
typedef struct drrl_model drrl_model;

DRRL_API const char* drrl_version(void);
DRRL_API const char* drrl_last_error(void);
/* Stable machine-readable name, e.g. "infeasible-or-poor-overlap". */
DRRL_API const char* drrl_status_name(drrl_status status);
DRRL_API void drrl_string_free(char* text);

DRRL_API drrl_status drrl_dataset_load_csv(const char* path, drrl_dataset** out);
DRRL_API drrl_status drrl_dataset_write_csv(const drrl_dataset* data, const char* path);
/* config_json: p, p_star, rho, sigma, sigma_e, n, scenario, coef_scale, seed. */
DRRL_API drrl_status drrl_dataset_generate_hdd(const char* config_json, drrl_dataset** out);
DRRL_API drrl_status drrl_dataset_shape(const drrl_dataset* data, size_t* rows, size_t* cols);
DRRL_API void drrl_dataset_free(drrl_dataset* data);

/* settings_json: training settings object, keys listed in the README. */
DRRL_API drrl_status drrl_train(const drrl_dataset* data, const char* settings_json, drrl_model** out);
DRRL_API drrl_status drrl_model_load(const char* path, drrl_model** out);
DRRL_API drrl_status drrl_model_save(const drrl_model* model, const char* path);
DRRL_API void drrl_model_free(drrl_model* model);

/* Writes rows predicted ITEs into out, which must hold out_len >= rows. */
DRRL_API drrl_status drrl_predict_ite(const drrl_model* model, const drrl_dataset* data, double* out,
                                      size_t out_len);

/* options_json: {"deltas": [...], "sigma_e": x}, or NULL. */
DRRL_API drrl_status drrl_evaluate(const drrl_model* model, const drrl_dataset* data,
                                   const char* options_json, char** metrics_json);

/* request_json: {"settings": {...}, "grid": {...}, "n_samples": n, "seed": s,
 * "fractions": [train, validation, test], "workers": w}. The data is split and
 * draws are scored on the validation part. best may be NULL. */
DRRL_API drrl_status drrl_search(const drrl_dataset* data, const char* request_json, drrl_model** best,
                                 char** log_json);

/* request_json: see the replicate configuration in the README. rows_csv may be NULL. */
DRRL_API drrl_status drrl_replicate(const char* request_json, char** result_json, char** rows_csv);

/* request_json: {"method": "ols"|"knn", "k": n, "estimand": "ate"|"att",
 * "deltas": [...]}. test may be NULL to evaluate in-sample. */
DRRL_API drrl_status drrl_baseline(const drrl_dataset* train, const drrl_dataset* test,
                                   const char* request_json, char** metrics_json);

/* CSV with t, y, balancing weight and representation coordinates per unit. */
DRRL_API drrl_status drrl_export_repr(const drrl_model* model, const drrl_dataset* data, const char* path);

#ifdef __cplusplus
}
#endif

#endif /* DRRL_DRRL_H_ */
