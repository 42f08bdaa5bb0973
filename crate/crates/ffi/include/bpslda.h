#ifndef BPSLDA_H
#define BPSLDA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BpsldaStatus {
  BPSLDA_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8, or an argument outside its domain.
   */
  BPSLDA_STATUS_INVALID_ARGUMENT = 1,
  BPSLDA_STATUS_IO = 2,
  /**
   * Malformed model, corpus, or config file.
   */
  BPSLDA_STATUS_FORMAT = 3,
  BPSLDA_STATUS_DIMENSION_MISMATCH = 4,
  /**
   * Non-finite values during inference or training.
   */
  BPSLDA_STATUS_NUMERICAL = 5,
  /**
   * Internal error; the library caught a panic.
   */
  BPSLDA_STATUS_INTERNAL = 6,
} BpsldaStatus;

/**
 * Opaque model handle.
 */
typedef struct BpsldaModel BpsldaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *bpslda_last_error(void);

/**
 * Loads a model file. On success `*out` owns a handle to release with
 * `bpslda_model_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BpsldaStatus bpslda_model_load(const char *path, struct BpsldaModel **out);

/**
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum BpsldaStatus bpslda_model_save(const struct BpsldaModel *model, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void bpslda_model_free(struct BpsldaModel *model);

/**
 * Vocabulary size, number of topics, and number of outputs (0 for an
 * unsupervised model). Any out pointer may be null.
 *
 * # Safety
 * Non-null pointers must be valid for writes.
 */
enum BpsldaStatus bpslda_model_dims(const struct BpsldaModel *model,
                                    size_t *vocab_size,
                                    size_t *num_topics,
                                    size_t *num_outputs);

/**
 * Infers topic proportions for one document given as `nnz` (term id,
 * count) pairs with strictly increasing ids. Writes `num_topics` values to
 * `theta` and, when `prediction` is non-null, `num_outputs` values to it:
 * the predicted mean for regression or the class posterior.
 *
 * # Safety
 * `ids` and `counts` must hold `nnz` elements; `theta` and `prediction`
 * must have room for the sizes reported by `bpslda_model_dims`.
 */
enum BpsldaStatus bpslda_infer(const struct BpsldaModel *model,
                               const uint32_t *ids,
                               const uint32_t *counts,
                               size_t nnz,
                               double *theta,
                               double *prediction);

/**
 * Trains a model on a vectorized corpus file. `config` holds flat
 * `key = value` lines (the same keys as the command-line config file) and
 * may be null for defaults.
 *
 * # Safety
 * `corpus_path` and non-null `config` must be NUL-terminated; `out` must be
 * a valid pointer.
 */
enum BpsldaStatus bpslda_train(const char *corpus_path,
                               const char *config,
                               struct BpsldaModel **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BPSLDA_H */
