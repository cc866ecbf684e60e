/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

/*
 * C interface to the memory-augmented encoder-decoder toolkit.
 *
 * Conventions:
 *   - Every function returns a cntm_status; CNTM_OK means success.
 *   - On failure, cntm_last_error() returns a message describing the most
 *     recent failing call on this thread. The pointer stays valid until the
 *     next failing call on the same thread.
 *   - Output strings (char**) are allocated by the library and must be
 *     released with cntm_string_free. They are NUL-terminated UTF-8.
 *   - Handles are opaque; release them with their matching _free function.
 *     _free functions accept NULL.
 */
#ifndef CNTM_CNTM_H_
#define CNTM_CNTM_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cntm_status {
  CNTM_OK = 0,
  CNTM_ERR_USAGE = 1,   /* bad invocation (flags, arguments) */
  CNTM_ERR_CONFIG = 2,  /* invalid configuration value or bundle */
  CNTM_ERR_SHAPE = 3,   /* tensor extent mismatch */
  CNTM_ERR_DOMAIN = 4,  /* argument outside its mathematical domain */
  CNTM_ERR_DATA = 5,    /* malformed file or corpus content */
  CNTM_ERR_NUMERIC = 6, /* non-finite value where finite math is required */
  CNTM_ERR_PANIC = 7    /* unexpected internal failure */
} cntm_status;

/* Process exit code conventions for a status: 0 ok, 1 usage/config,
 * 2 data/shape/domain, 3 numeric or internal. */
int cntm_status_exit_code(cntm_status status);

/* Message for the most recent failing call on this thread ("" if none). */
const char* cntm_last_error(void);

void cntm_string_free(char* s);

/* ---- Configuration ---------------------------------------------------- */

typedef struct cntm_config cntm_config;

/* Fresh configuration holding every default. */
cntm_status cntm_config_new(cntm_config** out);

/* Loads `section.key = value` text ('#' comments) from a file. */
cntm_status cntm_config_load(const char* path, cntm_config** out);

/* Sets one key from its text form; unknown keys are CNTM_ERR_CONFIG. */
cntm_status cntm_config_set(cntm_config* cfg, const char* key,
                            const char* value);

/* Canonical text form (sorted keys, round-trip number formatting). */
cntm_status cntm_config_dump(const cntm_config* cfg, char** out);

cntm_status cntm_config_save(const cntm_config* cfg, const char* path);

/* Checks the whole bundle for consistency. */
cntm_status cntm_config_validate(const cntm_config* cfg);

void cntm_config_free(cntm_config* cfg);

/* ---- Commands ---------------------------------------------------------- */

/* Writes the five-file benchmark layout (train/dev/test-full/test-long/
 * test-very-long) into out_dir. Byte-deterministic given (cfg, seed).
 * summary_out (optional: pass NULL to skip) receives a description. */
cntm_status cntm_gen_data(const cntm_config* cfg, uint64_t seed,
                          const char* out_dir, char** summary_out);

/* Writes one corpus file under a split rule: "full", "longest-k", or
 * "concat-longest-k"; k is the subset size for the latter two. */
cntm_status cntm_gen_split(const cntm_config* cfg, uint64_t seed,
                           const char* out_path, const char* split, int64_t k,
                           char** summary_out);

/* Trains a model (use_memory: nonzero for the memory bridge, zero for the
 * identity baseline) on train/dev corpora; writes the final averaged
 * checkpoint to ckpt_out and, when log_out is non-NULL, a metrics log. */
cntm_status cntm_train(const cntm_config* cfg, int use_memory, uint64_t seed,
                       const char* train_path, const char* dev_path,
                       const char* ckpt_out, const char* log_out,
                       char** summary_out);

/* Decodes and scores the three test splits in data_dir against a trained
 * checkpoint. baseline_tsv may be NULL; when given, it names a previous
 * report TSV and relative reductions are included in text_out. Either
 * output pointer may be NULL. */
cntm_status cntm_eval(const cntm_config* cfg, int use_memory,
                      const char* ckpt_path, const char* data_dir,
                      const char* baseline_tsv, char** tsv_out,
                      char** text_out);

/* Renders saved report TSVs; baseline_tsv may be NULL. */
cntm_status cntm_report(const char* const* tsv_paths, size_t n_paths,
                        const char* baseline_tsv, char** text_out);

/* Runs the finite-difference gradient battery. `only` may be NULL (all
 * suites) or one suite name. rounds >= 1 controls the random restarts.
 * inject_bug nonzero corrupts analytic gradients as a negative control.
 * all_passed_out (optional) receives 1/0. The call itself succeeds even
 * when cases fail; inspect all_passed_out. */
cntm_status cntm_gradcheck(const char* only, uint64_t seed, int rounds,
                           int inject_bug, char** table_out,
                           int* all_passed_out);

/* Names of the gradcheck suites as one newline-separated string. */
cntm_status cntm_gradcheck_suites(char** out);

/* Parameter count of the model the config would train. */
cntm_status cntm_param_count(const cntm_config* cfg, int use_memory,
                             int64_t* out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CNTM_CNTM_H_ */
