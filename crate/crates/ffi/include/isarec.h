#ifndef ISAREC_H
#define ISAREC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IsarecStatus {
  ISAREC_STATUS_OK = 0,
  ISAREC_STATUS_NULL_POINTER = 1,
  ISAREC_STATUS_INVALID_UTF8 = 2,
  ISAREC_STATUS_IO = 3,
  ISAREC_STATUS_PARSE = 4,
  ISAREC_STATUS_DIMENSION_MISMATCH = 5,
  ISAREC_STATUS_BUFFER_TOO_SMALL = 6,
  ISAREC_STATUS_INVALID_ARGUMENT = 7,
  ISAREC_STATUS_INTERNAL = 8,
  ISAREC_STATUS_PANIC = 9,
} IsarecStatus;

typedef struct IsarecNetwork IsarecNetwork;

typedef struct IsarecSvm IsarecSvm;

typedef struct IsarecVocabulary IsarecVocabulary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *isarec_last_error_message(void);

/**
 * Loads an `ISAREC-NET v1` file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum IsarecStatus isarec_network_load(const char *path, struct IsarecNetwork **out);

/**
 * # Safety
 * `net` must come from `isarec_network_load` and not be used afterwards.
 */
void isarec_network_free(struct IsarecNetwork *net);

/**
 * Length of a stacked feature vector, or 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t isarec_network_feature_dim(const struct IsarecNetwork *net);

/**
 * Values in one layer-2 block (frame-major, then rows, then columns), or 0
 * for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t isarec_network_block_len(const struct IsarecNetwork *net);

/**
 * Stacked features of one raw layer-2 block.
 *
 * # Safety
 * `block` must hold `block_len` doubles and `out` room for `out_len`.
 */
enum IsarecStatus isarec_network_extract_stacked(const struct IsarecNetwork *net,
                                                 const double *block,
                                                 size_t block_len,
                                                 double *out,
                                                 size_t out_len);

/**
 * Loads an `ISAREC-VOCAB v1` file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum IsarecStatus isarec_vocabulary_load(const char *path, struct IsarecVocabulary **out);

/**
 * # Safety
 * `vocab` must come from `isarec_vocabulary_load` and not be used afterwards.
 */
void isarec_vocabulary_free(struct IsarecVocabulary *vocab);

/**
 * # Safety
 * `vocab` must be null or a live handle.
 */
size_t isarec_vocabulary_len(const struct IsarecVocabulary *vocab);

/**
 * # Safety
 * `vocab` must be null or a live handle.
 */
size_t isarec_vocabulary_dim(const struct IsarecVocabulary *vocab);

/**
 * Index of the nearest centroid; ties go to the lower index.
 *
 * # Safety
 * `feature` must hold `len` doubles and `word` be writable.
 */
enum IsarecStatus isarec_vocabulary_assign(const struct IsarecVocabulary *vocab,
                                           const double *feature,
                                           size_t len,
                                           size_t *word);

/**
 * Loads an `ISAREC-SVM v1` file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum IsarecStatus isarec_svm_load(const char *path, struct IsarecSvm **out);

/**
 * # Safety
 * `svm` must come from `isarec_svm_load` and not be used afterwards.
 */
void isarec_svm_free(struct IsarecSvm *svm);

/**
 * # Safety
 * `svm` must be null or a live handle.
 */
size_t isarec_svm_num_classes(const struct IsarecSvm *svm);

/**
 * Name of class `index`, owned by the handle; null when out of range.
 *
 * # Safety
 * `svm` must be null or a live handle.
 */
const char *isarec_svm_class_name(const struct IsarecSvm *svm, size_t index);

/**
 * One-vs-one vote over a histogram; writes the winning class index.
 *
 * # Safety
 * `x` must hold `len` doubles and `class_index` be writable.
 */
enum IsarecStatus isarec_svm_predict(const struct IsarecSvm *svm,
                                     const double *x,
                                     size_t len,
                                     size_t *class_index);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISAREC_H */
