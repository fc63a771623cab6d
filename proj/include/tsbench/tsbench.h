/* C interface to the tsbench forecasting benchmark core. */
#ifndef TSBENCH_H
#define TSBENCH_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TSB_API __declspec(dllexport)
#else
#define TSB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tsb_status {
  TSB_OK = 0,
  TSB_ERR_INVALID_ARGUMENT = 1,
  TSB_ERR_SHAPE_MISMATCH = 2,
  TSB_ERR_MALFORMED_ROW = 3,
  TSB_ERR_DUPLICATE_TIMESTAMP = 4,
  TSB_ERR_IRREGULAR_SAMPLING = 5,
  TSB_ERR_EMPTY_DATASET = 6,
  TSB_ERR_EMPTY_SPLIT = 7,
  TSB_ERR_UNKNOWN_SERIES = 8,
  TSB_ERR_NON_FINITE = 9,
  TSB_ERR_STALE_CACHE = 10,
  TSB_ERR_TRIAL_FAILED = 11,
  TSB_ERR_SWEEP_FAILED = 12,
  TSB_ERR_CONFIG = 13,
  TSB_ERR_IO = 14,
  TSB_ERR_INTERNAL = 99
} tsb_status;

/* Message of the last failure on the calling thread; empty after success. */
TSB_API const char* tsb_last_error(void);
TSB_API const char* tsb_version(void);

/* Strings returned through out-parameters are owned by the caller. */
TSB_API void tsb_string_free(char* s);

/* Receives progress lines from long-running calls. NULL disables logging. */
typedef void (*tsb_log_fn)(const char* line, void* user);
TSB_API void tsb_set_log_callback(tsb_log_fn fn, void* user);

typedef struct tsb_config tsb_config;

TSB_API tsb_status tsb_config_load(const char* path, tsb_config** out);
TSB_API tsb_status tsb_config_parse(const char* json_text, tsb_config** out);
TSB_API void tsb_config_free(tsb_config* config);
TSB_API tsb_status tsb_config_set_seed(tsb_config* config, uint64_t seed);
/* TSB_ERR_CONFIG when invalid; *violations gets one problem per line. */
TSB_API tsb_status tsb_config_validate(const tsb_config* config, char** violations);
TSB_API tsb_status tsb_config_to_json(const tsb_config* config, char** out_json);

typedef struct tsb_run_options {
  const char* output_dir;  /* NULL: the config's output */
  size_t jobs;             /* 0 means 1 */
  int resume;
  int keep_checkpoints;
  const char* lambda_path; /* NULL: <output>/lambda_top.json */
} tsb_run_options;

TSB_API void tsb_run_options_init(tsb_run_options* options);

/* Each command may return its JSON result through out_json (may be NULL). */
TSB_API tsb_status tsb_generate(const tsb_config* config, const tsb_run_options* options, char** out_path);
TSB_API tsb_status tsb_tune(const tsb_config* config, const tsb_run_options* options, char** out_json);
TSB_API tsb_status tsb_train(const tsb_config* config, const tsb_run_options* options, char** out_json);
TSB_API tsb_status tsb_evaluate(const tsb_config* config, const tsb_run_options* options, char** out_json);
TSB_API tsb_status tsb_ensemble(const tsb_config* config, const tsb_run_options* options, char** out_json);

/* Verdict table between two report.json files, as JSON and markdown. */
TSB_API tsb_status tsb_compare_reports(const char* report_a, const char* report_b, double alpha, char** out_json,
                                       char** out_markdown);
/* Markdown rendering of a report.json file. */
TSB_API tsb_status tsb_render_report(const char* report_path, char** out_markdown);

/* Weighted MAE, RMSE and SMAPE of n paired values; weights may be NULL. */
TSB_API tsb_status tsb_compute_metrics(const double* truth, const double* pred, const double* weights, size_t n,
                                       double* mae, double* rmse, double* smape);

#ifdef __cplusplus
}
#endif

#endif /* TSBENCH_H */
