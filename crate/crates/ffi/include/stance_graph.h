#ifndef STANCE_GRAPH_H
#define STANCE_GRAPH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SgStatus {
  SG_STATUS_OK = 0,
  SG_STATUS_NULL_POINTER = 1,
  SG_STATUS_INVALID_ARGUMENT = 2,
  SG_STATUS_IO = 3,
  SG_STATUS_PARSE = 4,
  SG_STATUS_CONFIG = 5,
  SG_STATUS_TRAINING = 6,
  SG_STATUS_UNDEFINED_METRIC = 7,
  SG_STATUS_HASH_MISMATCH = 8,
  SG_STATUS_FORMAT = 9,
  SG_STATUS_UTF8 = 10,
  SG_STATUS_PANIC = 11,
} SgStatus;

/**
 * Parsed tweet collection.
 */
typedef struct SgDataset SgDataset;

/**
 * Node embedding matrix, one row per graph node.
 */
typedef struct SgEmbedding SgEmbedding;

/**
 * Undirected user reply graph.
 */
typedef struct SgGraph SgGraph;

/**
 * Trained logistic-regression classifier.
 */
typedef struct SgModel SgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *sg_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sg_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a string returned by this library, freed only once.
 */
void sg_string_free(char *s);

/**
 * Loads a JSONL tweet file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SgStatus sg_dataset_load(const char *path, bool skip_bad_lines, struct SgDataset **out);

/**
 * Generates a synthetic dataset. `config_toml` holds synthetic generator
 * settings; NULL selects the defaults.
 *
 * # Safety
 * `config_toml` must be NULL or NUL-terminated; `out` must be writable.
 */
enum SgStatus sg_dataset_synthetic(const char *config_toml, uint64_t seed, struct SgDataset **out);

/**
 * Number of tweets; 0 for NULL.
 *
 * # Safety
 * `d` must be NULL or a live dataset handle.
 */
size_t sg_dataset_len(const struct SgDataset *d);

/**
 * Number of tweets with a pro or skeptic label; 0 for NULL.
 *
 * # Safety
 * `d` must be NULL or a live dataset handle.
 */
size_t sg_dataset_labeled_len(const struct SgDataset *d);

/**
 * # Safety
 * `d` must be NULL or a dataset handle not yet freed.
 */
void sg_dataset_free(struct SgDataset *d);

/**
 * Builds the reply graph of `d` and drops nodes below `min_degree`. With
 * `core` set the filter is repeated until it is stable.
 *
 * # Safety
 * `d` must be a live dataset handle; `out` must be writable.
 */
enum SgStatus sg_graph_build(const struct SgDataset *d,
                             size_t min_degree,
                             bool core,
                             struct SgGraph **out);

/**
 * Loads an edge-list file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum SgStatus sg_graph_load(const char *path, struct SgGraph **out);

/**
 * # Safety
 * `g` must be NULL or a live graph handle.
 */
size_t sg_graph_n_nodes(const struct SgGraph *g);

/**
 * # Safety
 * `g` must be NULL or a live graph handle.
 */
size_t sg_graph_n_edges(const struct SgGraph *g);

/**
 * # Safety
 * `g` must be NULL or a graph handle not yet freed.
 */
void sg_graph_free(struct SgGraph *g);

/**
 * Trains node embeddings. `config_toml` holds embedding settings; NULL
 * selects the defaults. `threads` of 0 means 1.
 *
 * # Safety
 * `g` must be a live graph handle, `config_toml` NULL or NUL-terminated,
 * `out` writable.
 */
enum SgStatus sg_embed(const struct SgGraph *g,
                       const char *config_toml,
                       uint64_t seed,
                       size_t threads,
                       struct SgEmbedding **out);

/**
 * Loads an embedding text file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum SgStatus sg_embedding_load(const char *path, struct SgEmbedding **out);

/**
 * # Safety
 * `e` must be NULL or a live embedding handle.
 */
size_t sg_embedding_n_nodes(const struct SgEmbedding *e);

/**
 * # Safety
 * `e` must be NULL or a live embedding handle.
 */
size_t sg_embedding_dim(const struct SgEmbedding *e);

/**
 * Copies row `index` into `buf`, which must hold `len >= dim` doubles, and
 * writes the row's user id to `user_id` when it is not NULL.
 *
 * # Safety
 * `e` must be a live embedding handle and `buf` valid for `len` writes.
 */
enum SgStatus sg_embedding_row(const struct SgEmbedding *e,
                               size_t index,
                               double *buf,
                               size_t len,
                               uint64_t *user_id);

/**
 * # Safety
 * `e` must be NULL or an embedding handle not yet freed.
 */
void sg_embedding_free(struct SgEmbedding *e);

/**
 * Area under the ROC curve of `scores` against `positive` (nonzero means
 * positive). Fails with `SG_STATUS_UNDEFINED_METRIC` when one class is
 * missing.
 *
 * # Safety
 * `scores` and `positive` must be valid for `n` reads; `out` writable.
 */
enum SgStatus sg_auc(const double *scores, const uint8_t *positive, size_t n, double *out);

/**
 * Loads a model text file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum SgStatus sg_model_load(const char *path, struct SgModel **out);

/**
 * # Safety
 * `m` must be NULL or a live model handle.
 */
size_t sg_model_dim(const struct SgModel *m);

/**
 * Probability of the pro class for one feature vector of length `len`.
 *
 * # Safety
 * `m` must be a live model handle, `x` valid for `len` reads, `out`
 * writable.
 */
enum SgStatus sg_model_predict_proba(const struct SgModel *m,
                                     const double *x,
                                     size_t len,
                                     double *out);

/**
 * # Safety
 * `m` must be NULL or a model handle not yet freed.
 */
void sg_model_free(struct SgModel *m);

/**
 * Runs the whole pipeline from a TOML pipeline configuration and writes
 * its artifacts to `out_dir`. On success `report_json` receives the
 * report, to be released with [`sg_string_free`].
 *
 * # Safety
 * `config_toml` and `out_dir` must be NUL-terminated; `report_json` must be
 * writable.
 */
enum SgStatus sg_run_pipeline(const char *config_toml, const char *out_dir, char **report_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STANCE_GRAPH_H */
