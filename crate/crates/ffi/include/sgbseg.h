#ifndef SGBSEG_H
#define SGBSEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SGB_DECODER_SGB_A 0

#define SGB_DECODER_SGB_C 1

#define SGB_DECODER_FORWARD 2

#define SGB_DECODER_BACKWARD 3

/**
 * Result of every call.
 */
typedef enum SgbStatus {
  SGB_STATUS_OK = 0,
  SGB_STATUS_NULL_ARGUMENT = 1,
  SGB_STATUS_INVALID_UTF8 = 2,
  SGB_STATUS_IO = 3,
  SGB_STATUS_FORMAT = 4,
  SGB_STATUS_INVALID_ARGUMENT = 5,
  SGB_STATUS_UNKNOWN_CHAR = 6,
  SGB_STATUS_BUFFER_TOO_SMALL = 7,
  SGB_STATUS_INTERNAL = 8,
} SgbStatus;

/**
 * A loaded model. Opaque to C.
 */
typedef struct SgbModel SgbModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *sgb_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *sgb_version(void);

/**
 * Loads a model from a checkpoint file or from the directory written by
 * `sgbseg train`. On success `*out` owns a new handle.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum SgbStatus sgb_model_load(const char *path, struct SgbModel **out);

/**
 * Releases a handle from [`sgb_model_load`]. Null is ignored.
 *
 * # Safety
 * `model` must come from [`sgb_model_load`] and not be freed twice.
 */
void sgb_model_free(struct SgbModel *model);

/**
 * Vocabulary size and maximum word length of a model.
 *
 * # Safety
 * `model` must be a live handle; the out pointers must be valid or null.
 */
enum SgbStatus sgb_model_info(const struct SgbModel *model, size_t *vocab_size, size_t *t_max);

/**
 * Segments one line of UTF-8 text. `*out` receives a new space-delimited
 * string to be released with [`sgb_string_free`].
 *
 * # Safety
 * `model` must be a live handle, `text` a nul-terminated string and `out`
 * a valid pointer.
 */
enum SgbStatus sgb_segment(const struct SgbModel *model,
                           const char *text,
                           int32_t decoder,
                           char **out);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void sgb_string_free(char *s);

/**
 * Log of the summed probability of all segmentations of a sentence. The
 * buffer is `n x t_max` row-major: entry `[s * t_max + len - 1]` scores
 * the word of length `len` starting at `s`; entries past the sentence end
 * are ignored and the rest must be finite.
 *
 * # Safety
 * `scores` must point to `n * t_max` doubles and `out` be valid.
 */
enum SgbStatus sgb_log_marginal(const double *scores, size_t n, size_t t_max, double *out);

/**
 * Best segmentation of a score buffer (layout as in [`sgb_log_marginal`]).
 * Word end positions are written to `ends` (the last is always `n`);
 * `*count` receives their number and `*score` the best total score. When
 * `capacity` is too small, `*count` still reports the needed size and
 * [`SgbStatus::BufferTooSmall`] is returned.
 *
 * # Safety
 * `scores` must point to `n * t_max` doubles, `ends` to `capacity` sizes,
 * and `count` be valid; `score` may be null.
 */
enum SgbStatus sgb_viterbi(const double *scores,
                           size_t n,
                           size_t t_max,
                           size_t *ends,
                           size_t capacity,
                           size_t *count,
                           double *score);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SGBSEG_H */
