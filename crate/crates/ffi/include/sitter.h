#ifndef SITTER_H
#define SITTER_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SitterStatus {
  SITTER_STATUS_OK = 0,
  SITTER_STATUS_NULL_POINTER = 1,
  SITTER_STATUS_INVALID_UTF8 = 2,
  SITTER_STATUS_INVALID_INPUT = 3,
  SITTER_STATUS_SHAPE = 4,
  SITTER_STATUS_IO = 5,
  SITTER_STATUS_PARSE = 6,
  SITTER_STATUS_NOT_FOUND = 7,
  SITTER_STATUS_PANIC = 8,
} SitterStatus;

/**
 * A loaded, validated manifest.
 */
typedef struct SitterManifest SitterManifest;

/**
 * Scores with labels plus their precomputed ROC sweep.
 */
typedef struct SitterScoreSet SitterScoreSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *sitter_last_error_message(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *sitter_version(void);

/**
 * Loads a manifest file into a new handle.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a writable pointer.
 */
enum SitterStatus sitter_manifest_load(const char *path, struct SitterManifest **out);

/**
 * # Safety
 * `m` must come from [`sitter_manifest_load`] and not be used afterwards.
 */
void sitter_manifest_free(struct SitterManifest *m);

/**
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum SitterStatus sitter_manifest_len(const struct SitterManifest *m, size_t *out);

/**
 * Declared dimension of source `tag`.
 *
 * # Safety
 * `m` must be a live handle, `tag` nul-terminated and `out` writable.
 */
enum SitterStatus sitter_manifest_source_dim(const struct SitterManifest *m,
                                             const char *tag,
                                             size_t *out);

/**
 * Cosine similarity of two items' `tag` vectors.
 *
 * # Safety
 * `m` must be a live handle, the strings nul-terminated and `out` writable.
 */
enum SitterStatus sitter_manifest_score_pair(const struct SitterManifest *m,
                                             const char *item_a,
                                             const char *item_b,
                                             const char *tag,
                                             double *out);

/**
 * Builds a score set from `n` scores; `labels[i]` is 1 for genuine and 0
 * for impostor.
 *
 * # Safety
 * `scores` and `labels` must hold `n` elements and `out` be writable.
 */
enum SitterStatus sitter_score_set_new(const double *scores,
                                       const uint8_t *labels,
                                       size_t n,
                                       struct SitterScoreSet **out);

/**
 * # Safety
 * `s` must come from [`sitter_score_set_new`] and not be used afterwards.
 */
void sitter_score_set_free(struct SitterScoreSet *s);

/**
 * # Safety
 * `s` must be a live handle and `out` writable.
 */
enum SitterStatus sitter_score_set_eer(const struct SitterScoreSet *s, double *out);

/**
 * True accept rate at the most permissive threshold whose FMR does not
 * exceed `far_target`.
 *
 * # Safety
 * `s` must be a live handle and `out` writable.
 */
enum SitterStatus sitter_score_set_tar_at_far(const struct SitterScoreSet *s,
                                              double far_target,
                                              double *out);

/**
 * Fused cosine of two items given as concatenated per-source vectors.
 * Source `i` has length `dims[i]`; both `a` and `b` hold `sum(dims)` values.
 *
 * # Safety
 * `dims` must hold `n_sources` elements, `a` and `b` `sum(dims)` each, and
 * `out` be writable.
 */
enum SitterStatus sitter_fused_score(const double *a,
                                     const double *b,
                                     const size_t *dims,
                                     size_t n_sources,
                                     double *out);

/**
 * Triplet loss of three unit vectors of length `dim` under cosine distance.
 *
 * # Safety
 * `anchor`, `positive` and `negative` must hold `dim` values; `out` writable.
 */
enum SitterStatus sitter_triplet_loss(const double *anchor,
                                      const double *positive,
                                      const double *negative,
                                      size_t dim,
                                      double margin,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SITTER_H */
