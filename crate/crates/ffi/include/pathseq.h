#ifndef PATHSEQ_H
#define PATHSEQ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PathseqStatus {
  PATHSEQ_STATUS_OK = 0,
  PATHSEQ_STATUS_NULL_ARGUMENT = 1,
  PATHSEQ_STATUS_INVALID_UTF8 = 2,
  PATHSEQ_STATUS_PARSE = 3,
  PATHSEQ_STATUS_IO = 4,
  PATHSEQ_STATUS_CHECKPOINT = 5,
  PATHSEQ_STATUS_MODEL = 6,
  PATHSEQ_STATUS_PANIC = 7,
} PathseqStatus;

/**
 * Opaque trained model.
 */
typedef struct PathseqModel PathseqModel;

typedef struct PathseqPrf {
  double precision;
  double recall;
  double f1;
} PathseqPrf;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call into this library on the same thread.
 */
const char *pathseq_last_error(void);

/**
 * Library version, a static string.
 */
const char *pathseq_version(void);

/**
 * # Safety
 * `s` is null or was returned by this library and not yet freed.
 */
void pathseq_string_free(char *s);

/**
 * Subtokens of an identifier, space-separated.
 *
 * # Safety
 * `token` is a NUL-terminated string; `out` is valid for writes.
 */
enum PathseqStatus pathseq_split_subtokens(const char *token, char **out);

/**
 * Parses one MiniJ method and returns its AST in the text form.
 *
 * # Safety
 * `source` is a NUL-terminated string; `out` is valid for writes.
 */
enum PathseqStatus pathseq_parse_method(const char *source, char **out);

/**
 * Dataset lines (one per method, newline-terminated) for every method in
 * `source`. Fails if no method yields an example.
 *
 * # Safety
 * `source` is a NUL-terminated string; `out` is valid for writes.
 */
enum PathseqStatus pathseq_extract(const char *source, char **out);

/**
 * # Safety
 * `path` is a NUL-terminated string; `out` is valid for writes.
 */
enum PathseqStatus pathseq_model_load(const char *path, struct PathseqModel **out);

/**
 * # Safety
 * `model` is null or was returned by [`pathseq_model_load`] and not yet
 * freed.
 */
void pathseq_model_free(struct PathseqModel *model);

/**
 * Predicts names. `input` is MiniJ source, or dataset lines when `is_c2s`
 * is nonzero. Output: one `index<TAB>subtokens<TAB>score` line per
 * hypothesis, `beam` (at least 1) hypotheses per example.
 *
 * # Safety
 * `model` is a live model; `input` is a NUL-terminated string; `out` is
 * valid for writes.
 */
enum PathseqStatus pathseq_model_predict(const struct PathseqModel *model,
                                         const char *input_text,
                                         int32_t is_c2s,
                                         uint32_t beam,
                                         char **out);

/**
 * Subtoken precision, recall and F1 of space-separated sequences.
 *
 * # Safety
 * `predicted` and `gold` are NUL-terminated strings; `out` is valid for
 * writes.
 */
enum PathseqStatus pathseq_subtoken_f1(const char *predicted,
                                       const char *gold,
                                       struct PathseqPrf *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PATHSEQ_H */
