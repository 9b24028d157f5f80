/*
 * C interface to the relational SVM engine.
 *
 * Every function returns a status code (relsvm_status). On failure,
 * relsvm_last_error() describes the problem; output pointers are left
 * untouched unless documented otherwise. Strings returned through char**
 * are owned by the caller and released with relsvm_free_string().
 *
 * Requests and results are JSON documents; docs/schemas holds their schemas.
 */
#ifndef RELSVM_H
#define RELSVM_H

#if defined(_WIN32)
#if defined(RELSVM_BUILDING)
#define RELSVM_API __declspec(dllexport)
#else
#define RELSVM_API __declspec(dllimport)
#endif
#else
#define RELSVM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as CLI exit codes. */
typedef enum relsvm_status {
  RELSVM_OK = 0,
  RELSVM_ERR_CONFIG = 1,
  RELSVM_ERR_CYCLIC = 2,
  RELSVM_ERR_DATA = 3,
  RELSVM_ERR_OUTPUT_CAP = 4,
  RELSVM_ERR_VERIFY = 5,
  RELSVM_ERR_BLOWUP = 6,
  RELSVM_ERR_INTERNAL = 7
} relsvm_status;

/* Immutable loaded JoinSpec; safe to share between threads. */
typedef struct relsvm_spec relsvm_spec;

RELSVM_API const char* relsvm_version(void);
RELSVM_API const char* relsvm_status_name(int status);
/* Message of the last failure on the calling thread ("" if none). */
RELSVM_API const char* relsvm_last_error(void);
RELSVM_API void relsvm_free_string(char* s);

/* Loads a JoinSpec JSON file and its CSV tables. */
RELSVM_API int relsvm_spec_load(const char* path, relsvm_spec** out);
RELSVM_API void relsvm_spec_free(relsvm_spec* spec);
/* Tables, attributes, features, label and exact join size. Fails with
 * RELSVM_ERR_CYCLIC when the join is not acyclic. */
RELSVM_API int relsvm_spec_describe(const relsvm_spec* spec, char** out_json);

/* Pseudo-gradient descent. config_json: descent config object (NULL or ""
 * for defaults). trace_json receives the deterministic trace; seconds (may
 * be NULL) the wall-clock time. */
RELSVM_API int relsvm_train(const relsvm_spec* spec, const char* config_json, char** trace_json,
                            double* seconds);

/* Oracle comparisons. Returns RELSVM_ERR_VERIFY, with report_json set, when
 * any property fails. */
RELSVM_API int relsvm_verify(const relsvm_spec* spec, const char* options_json,
                             char** report_json);

/* Per-(feature, value) far-point row counts for one label. */
RELSVM_API int relsvm_count(const relsvm_spec* spec, const char* request_json, char** out_json);

/* Sampling-based stability probe over the materialized join. */
RELSVM_API int relsvm_probe(const relsvm_spec* spec, const char* config_json, char** report_json);

/* Materializes the join and runs the exact-gradient baseline. matrix_csv
 * (may be NULL) receives the design matrix as CSV. */
RELSVM_API int relsvm_oracle(const relsvm_spec* spec, const char* request_json, char** out_json,
                             char** matrix_csv);

/* Writes a generated instance (CSVs plus spec.json) into out_dir, which must
 * exist. request_json selects "knapsack" or "stable". */
RELSVM_API int relsvm_gen(const char* request_json, const char* out_dir, char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* RELSVM_H */
