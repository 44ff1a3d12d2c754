#ifndef DSLR_DSLR_H
#define DSLR_DSLR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(DSLR_BUILDING_LIBRARY)
#    define DSLR_API __declspec(dllexport)
#  else
#    define DSLR_API __declspec(dllimport)
#  endif
#else
#  define DSLR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dslr_status {
  DSLR_OK = 0,
  DSLR_E_INVALID_ARGUMENT = 1,
  DSLR_E_IO = 2,
  DSLR_E_PARSE = 3,
  DSLR_E_DUPLICATE_ID = 4,
  DSLR_E_EMPTY_CORPUS = 5,
  DSLR_E_VERSION_MISMATCH = 6,
  DSLR_E_UNKNOWN_SENTENCE = 7,
  DSLR_E_REMOTE_UNAVAILABLE = 8,
  DSLR_E_REMOTE_MALFORMED = 9,
  DSLR_E_TIMEOUT = 10,
  DSLR_E_EMPTY_INPUT = 11,
  DSLR_E_EMPTY_POOL = 12,
  DSLR_E_SHAPE_MISMATCH = 13,
  DSLR_E_CONFIG = 14,
  DSLR_E_INTERNAL = 15,
  /* The run completed but its failure rate is above the configured ceiling.
     Outputs are still filled in. */
  DSLR_E_PARTIAL_FAILURE = 16
} dslr_status_t;

typedef struct dslr_index dslr_index_t;
typedef struct dslr_engine dslr_engine_t;

DSLR_API const char* dslr_version(void);
DSLR_API const char* dslr_status_string(dslr_status_t status);
/* Message of the last failing call on this thread; "" if none. */
DSLR_API const char* dslr_last_error(void);
/* Strings returned through char** out-parameters are owned by the caller. */
DSLR_API void dslr_string_free(char* s);

/* options_json may be NULL: {"analyzer":{"stem":false},"bm25":{"k1":0.9,"b":0.4}} */
DSLR_API dslr_status_t dslr_index_build_jsonl(const char* corpus_path, const char* options_json,
                                              dslr_index_t** out);
DSLR_API dslr_status_t dslr_index_load(const char* path, dslr_index_t** out);
DSLR_API dslr_status_t dslr_index_save(const dslr_index_t* index, const char* path);
DSLR_API dslr_status_t dslr_index_stats(const dslr_index_t* index, size_t* doc_count, double* avg_doc_len,
                                        size_t* term_count);
DSLR_API void dslr_index_free(dslr_index_t* index);
/* {"query_id","n_requested","hits":[{"doc_id","title","score"}]} */
DSLR_API dslr_status_t dslr_retrieve(const dslr_index_t* index, const char* query, size_t n, char** out_json);

/* JSON array of {"position","text","begin","end"}; abbreviations_path may be NULL. */
DSLR_API dslr_status_t dslr_segment(const char* text, const char* abbreviations_path, char** out_json);

DSLR_API dslr_status_t dslr_percentile(const double* values, size_t n, double p, double* out);
/* tokenizer_json may be NULL (whitespace). */
DSLR_API dslr_status_t dslr_count_tokens(const char* text, const char* tokenizer_json, size_t* out);

DSLR_API dslr_status_t dslr_engine_create(const char* config_json, dslr_engine_t** out);
DSLR_API void dslr_engine_free(dslr_engine_t* engine);
DSLR_API dslr_status_t dslr_engine_effective_config(const dslr_engine_t* engine, char** out_json);
DSLR_API dslr_status_t dslr_engine_fingerprint(const dslr_engine_t* engine, char** out_hex);
DSLR_API dslr_status_t dslr_engine_retrieve(const dslr_engine_t* engine, const char* query, size_t n,
                                            char** out_json);
/* Refined contexts as JSON lines plus a JSON report. */
DSLR_API dslr_status_t dslr_engine_refine(const dslr_engine_t* engine, char** out_jsonl, char** out_report);
/* EvalRecords as JSON lines plus the RunReport. */
DSLR_API dslr_status_t dslr_engine_evaluate(const dslr_engine_t* engine, char** out_jsonl, char** out_report);
/* ThresholdSpec JSON plus a histogram JSON of the sampled score pool. */
DSLR_API dslr_status_t dslr_engine_calibrate(const dslr_engine_t* engine, char** out_spec, char** out_histogram);
/* Sweep table as CSV plus the full result as JSON. */
DSLR_API dslr_status_t dslr_engine_sweep(const dslr_engine_t* engine, char** out_csv, char** out_json);

#ifdef __cplusplus
}
#endif

#endif
