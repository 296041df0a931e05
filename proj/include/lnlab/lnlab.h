#ifndef LNLAB_LNLAB_H
#define LNLAB_LNLAB_H

/* C interface to the label-noise benchmark library.
 *
 * Every fallible call returns an lnlab_status; on failure the message is
 * available from lnlab_last_error() on the same thread until the next call.
 * Strings returned through char** are owned by the caller and released with
 * lnlab_string_free. Configs are passed as JSON text. */

#include <stddef.h>
#include <stdint.h>

#if defined(LNLAB_BUILDING_LIBRARY)
#define LNLAB_API __attribute__((visibility("default")))
#else
#define LNLAB_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lnlab_status {
  LNLAB_OK = 0,
  LNLAB_ERR_CONFIG = 1,
  LNLAB_ERR_USAGE = 2,
  LNLAB_ERR_FORMAT = 3,
  LNLAB_ERR_DOMAIN = 4,
  LNLAB_ERR_IO = 5,
  LNLAB_ERR_RUNTIME = 6,
  LNLAB_ERR_ARGUMENT = 7
} lnlab_status;

typedef struct lnlab_dataset lnlab_dataset;
typedef struct lnlab_matrix lnlab_matrix;
typedef struct lnlab_model lnlab_model;
typedef struct lnlab_experiment lnlab_experiment;
typedef struct lnlab_report lnlab_report;

LNLAB_API const char* lnlab_version(void);
LNLAB_API const char* lnlab_last_error(void);
LNLAB_API const char* lnlab_status_name(lnlab_status status);
LNLAB_API void lnlab_string_free(char* s);

/* Normalizes a config object of the given kind ("synthetic", "noise",
 * "model", "train", "tapt") by filling in defaults. */
LNLAB_API lnlab_status lnlab_config_resolve(const char* kind, const char* json, char** out_json);

/* Datasets */

/* NULL `spec_json` uses the defaults. */
LNLAB_API lnlab_status lnlab_dataset_synthetic(const char* spec_json, lnlab_dataset** out);
/* Raw csv/tsv/jsonl text. With `vocab_from` set, tokens and class names are
 * encoded against that dataset. `options_json` may hold min_freq, max_vocab
 * and may be NULL. */
LNLAB_API lnlab_status lnlab_dataset_load(const char* path, const char* format, const char* text_field,
                                          const char* label_field, const char* options_json,
                                          const lnlab_dataset* vocab_from, lnlab_dataset** out);
LNLAB_API lnlab_status lnlab_dataset_read(const char* path, lnlab_dataset** out);
LNLAB_API lnlab_status lnlab_dataset_write(const lnlab_dataset* ds, const char* path);
LNLAB_API void lnlab_dataset_free(lnlab_dataset* ds);

LNLAB_API size_t lnlab_dataset_size(const lnlab_dataset* ds);
LNLAB_API size_t lnlab_dataset_num_classes(const lnlab_dataset* ds);
LNLAB_API size_t lnlab_dataset_vocab_size(const lnlab_dataset* ds);
/* Writes size() labels; missing noisy labels become -1. */
LNLAB_API lnlab_status lnlab_dataset_labels(const lnlab_dataset* ds, int noisy, int64_t* out_labels);

LNLAB_API lnlab_status lnlab_dataset_split(const lnlab_dataset* ds, double fraction, uint64_t seed,
                                           lnlab_dataset** out_rest, lnlab_dataset** out_held);
LNLAB_API lnlab_status lnlab_dataset_corrupt(const lnlab_dataset* ds, const lnlab_matrix* matrix, uint64_t seed,
                                             lnlab_dataset** out);
/* `fallback` is "drop", a class name or a decimal class index. */
LNLAB_API lnlab_status lnlab_dataset_apply_rules(const lnlab_dataset* ds, const char* rules_json,
                                                 const char* fallback, lnlab_dataset** out);
LNLAB_API lnlab_status lnlab_dataset_flip_stats(const lnlab_dataset* ds, size_t* out_count, size_t* out_flipped);

/* Transition matrices */

LNLAB_API lnlab_status lnlab_matrix_from_noise(const char* noise_json, size_t k, lnlab_matrix** out);
LNLAB_API lnlab_status lnlab_matrix_from_values(size_t k, const double* row_major, lnlab_matrix** out);
LNLAB_API lnlab_status lnlab_matrix_from_json(const char* json, lnlab_matrix** out);
LNLAB_API lnlab_status lnlab_matrix_empirical(const lnlab_dataset* ds, lnlab_matrix** out);
LNLAB_API size_t lnlab_matrix_k(const lnlab_matrix* m);
LNLAB_API double lnlab_matrix_get(const lnlab_matrix* m, size_t i, size_t j);
LNLAB_API lnlab_status lnlab_matrix_to_json(const lnlab_matrix* m, char** out_json);
LNLAB_API void lnlab_matrix_free(lnlab_matrix* m);

/* Models */

/* num_classes and vocab_size default to those of `shape_from` when given. */
LNLAB_API lnlab_status lnlab_model_init(const char* config_json, const lnlab_dataset* shape_from, lnlab_model** out);
LNLAB_API lnlab_status lnlab_model_load(const char* path, lnlab_model** out);
LNLAB_API lnlab_status lnlab_model_save(const lnlab_model* model, const char* path);
LNLAB_API lnlab_status lnlab_model_config(const lnlab_model* model, char** out_json);
LNLAB_API lnlab_status lnlab_model_predict(const lnlab_model* model, const lnlab_dataset* ds, uint32_t* out_labels);
/* Accuracy against gold (noisy == 0) or noisy labels. */
LNLAB_API lnlab_status lnlab_model_evaluate(const lnlab_model* model, const lnlab_dataset* ds, int noisy,
                                            double* out_accuracy);
LNLAB_API void lnlab_model_free(lnlab_model* model);

/* Masked-token pretraining of the embedding table on the corpus text.
 * `out_summary_json` (nullable) receives per-epoch losses and masked
 * accuracy. */
LNLAB_API lnlab_status lnlab_tapt(const lnlab_model* model, const lnlab_dataset* corpus, const char* config_json,
                                  lnlab_model** out_model, char** out_summary_json);

/* Trains a copy of `initial`. `val` may be NULL when validation is off.
 * `out_result_json` receives the epoch trace. */
LNLAB_API lnlab_status lnlab_train(const lnlab_dataset* train, const lnlab_dataset* val, const lnlab_dataset* test,
                                   const lnlab_model* initial, const char* config_json, lnlab_model** out_model,
                                   char** out_result_json);

/* Experiments and reports */

typedef void (*lnlab_trial_callback)(const char* method, const char* noise, int tapt, size_t trial,
                                     const char* trace_json, void* user);

/* Relative paths in the spec resolve against `base_dir` (may be NULL). */
LNLAB_API lnlab_status lnlab_experiment_parse(const char* spec_json, const char* base_dir, lnlab_experiment** out);
LNLAB_API lnlab_status lnlab_experiment_load(const char* path, lnlab_experiment** out);
/* The canonical spec, with rule files inlined. */
LNLAB_API lnlab_status lnlab_experiment_resolved(const lnlab_experiment* exp, char** out_json);
/* `workers` 0 keeps the spec value; a NULL or empty `timestamp` uses the
 * current UTC time. */
LNLAB_API lnlab_status lnlab_experiment_run(const lnlab_experiment* exp, size_t workers, const char* timestamp,
                                            lnlab_trial_callback on_trial, void* user, lnlab_report** out);
LNLAB_API void lnlab_experiment_free(lnlab_experiment* exp);

/* Format is "csv", "markdown" or "json". */
LNLAB_API lnlab_status lnlab_report_render(const lnlab_report* report, const char* format, char** out_text);
LNLAB_API lnlab_status lnlab_report_write(const lnlab_report* report, const char* format, const char* path);
/* .csv files carry rows only; anything else is read as JSON. */
LNLAB_API lnlab_status lnlab_report_read(const char* path, lnlab_report** out);
LNLAB_API size_t lnlab_report_size(const lnlab_report* report);
/* One "method | noise | original | +TAPT delta" line per matched pair. */
LNLAB_API lnlab_status lnlab_report_delta(const lnlab_report* report, char** out_text);
LNLAB_API void lnlab_report_free(lnlab_report* report);

#ifdef __cplusplus
}
#endif

#endif
