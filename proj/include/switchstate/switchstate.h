/* C API for the switchstate library: opaque handles, integer status codes.
 * Every function returns SS_OK (0) on success; on failure the thread-local
 * message from ss_last_error() describes what went wrong. Strings returned
 * through char** are owned by the caller and must be released with
 * ss_string_free(). */
#ifndef SWITCHSTATE_H
#define SWITCHSTATE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ss_status {
  SS_OK = 0,
  SS_ERR_INVALID_ARG = 1,   /* bad caller input (dims, non-finite data) */
  SS_ERR_INVALID_PARAM = 2, /* model parameters violate an invariant */
  SS_ERR_NUMERIC = 3,       /* Cholesky failure, non-finite objective */
  SS_ERR_IO = 4,            /* file system or parse failure */
  SS_ERR_CONTRACT = 5       /* internal precondition broken */
} ss_status;

typedef struct ss_model ss_model;
typedef struct ss_dataset ss_dataset;

/* Thread-local message for the most recent failure on this thread. */
const char* ss_last_error(void);

void ss_string_free(char* s);

/* ---- model ---- */

ss_status ss_model_load(const char* path, ss_model** out);
ss_status ss_model_save(const ss_model* model, const char* path);
ss_status ss_model_to_json(const ss_model* model, char** out_json);
ss_status ss_model_from_json(const char* json_text, ss_model** out);
ss_status ss_model_dims(const ss_model* model, int* K, int* D, int* C);
void ss_model_free(ss_model* model);

/* ---- dataset ---- */

ss_status ss_dataset_load(const char* manifest_path, ss_dataset** out);
ss_status ss_dataset_size(const ss_dataset* dataset, long* out);
void ss_dataset_free(ss_dataset* dataset);

/* ---- simulate ---- */

typedef struct ss_sim_opts {
  int K, D, C, N, T;
  uint64_t seed;
  double mean_separation; /* <= 0 selects the default (4.0) */
  double g_scale;         /* < 0 selects the default (0.1) */
  double alpha;           /* <= 0 selects the default (0.5) */
  double kappa;           /* < 0 selects the default (100) */
} ss_sim_opts;

/* Samples a model and N sequences; writes manifest.json, per-sequence CSVs,
 * truth.json (true params + state paths) into out_dir. */
ss_status ss_simulate(const ss_sim_opts* opts, const char* out_dir);

/* ---- fit ---- */

/* config_json may be NULL for defaults; mirrors the FitConfig schema.
 * report_json (optional) receives the fit report; include_timings controls
 * whether wall times are reported (0 keeps outputs reproducible). */
ss_status ss_fit(const ss_dataset* dataset, const char* config_json,
                 int include_timings, ss_model** out_model,
                 char** report_json, char** trace_csv);

/* Default FitConfig as JSON (the `--show-config` payload). */
ss_status ss_default_config(char** out_json);

/* ---- classify / evaluate / analyze ---- */

/* CSV with one row per sequence: id,predicted,tie,score_<class>... */
ss_status ss_classify(const ss_model* model, const ss_dataset* dataset,
                      char** out_csv);

/* Accuracy/sensitivity/specificity/PPV/NPV (percent) as JSON; undefined
 * metrics are null. */
ss_status ss_evaluate(const ss_model* model, const ss_dataset* dataset,
                      int positive_class, char** out_json);

typedef struct ss_analyze_opts {
  int top_n_edges;        /* <= 0 selects the default (20) */
  int use_marginals;      /* nonzero decodes dwell paths from gamma argmax */
  const char* svg_dir;    /* optional: write SVG heatmaps/bars here */
  const char* posterior_dir; /* optional: per-(sequence,class) gamma CSVs */
} ss_analyze_opts;

ss_status ss_analyze(const ss_model* model, const ss_dataset* dataset,
                     const ss_analyze_opts* opts, char** report_json,
                     char** edges_csv);

/* ---- verification harnesses ---- */

/* Analytic vs finite-difference gradients; JSON report. */
ss_status ss_gradcheck(uint64_t seed, char** report_json);

/* Forward-backward vs brute-force enumeration on random small instances;
 * JSON report with max relative errors. *max_rel_err may be NULL. */
ss_status ss_oracle_check(uint64_t seed, int instances, char** report_json,
                          double* max_rel_err);

/* 0 = use SWITCHSTATE_THREADS or hardware concurrency. */
void ss_set_threads(int threads);

#ifdef __cplusplus
}
#endif

#endif /* SWITCHSTATE_H */
