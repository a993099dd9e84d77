#ifndef METAOD_H
#define METAOD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum MetaodStatus {
  METAOD_STATUS_OK = 0,
  METAOD_STATUS_NULL_POINTER = 1,
  METAOD_STATUS_INVALID_UTF8 = 2,
  METAOD_STATUS_FILE_NOT_FOUND = 3,
  METAOD_STATUS_PARSE = 4,
  METAOD_STATUS_VERSION_MISMATCH = 5,
  METAOD_STATUS_CORRUPT_FILE = 6,
  METAOD_STATUS_INVALID_ARGUMENT = 7,
  METAOD_STATUS_DEGENERATE_DATASET = 8,
  METAOD_STATUS_BUFFER_TOO_SMALL = 9,
  METAOD_STATUS_IO = 10,
  METAOD_STATUS_PANIC = 11,
  METAOD_STATUS_INTERNAL = 12,
} MetaodStatus;

// Opaque dataset.
typedef struct MetaodDataset MetaodDataset;

// Opaque trained selector.
typedef struct MetaodLearner MetaodLearner;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version string of the library, static and NUL-terminated.
const char *metaod_version(void);

// Copies the last error message of the calling thread into `buf`.
//
// # Safety
// `buf` must be valid for `len` bytes or null; `required` must be null or writable.
enum MetaodStatus metaod_last_error_message(char *buf, uintptr_t len, uintptr_t *required);

// Loads a learner file written by `metaod train`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum MetaodStatus metaod_learner_load(const char *path, struct MetaodLearner **out);

// Releases a learner. Null is ignored.
//
// # Safety
// `learner` must come from [`metaod_learner_load`] and not be used afterwards.
void metaod_learner_free(struct MetaodLearner *learner);

// Number of candidate models, or 0 for a null handle.
//
// # Safety
// `learner` must be a live handle or null.
uintptr_t metaod_learner_n_models(const struct MetaodLearner *learner);

// Copies the identifier of model `index` into `buf`.
//
// # Safety
// `learner` must be a live handle; `buf` must be valid for `len` bytes or null.
enum MetaodStatus metaod_learner_model_id(const struct MetaodLearner *learner,
                                          uintptr_t index,
                                          char *buf,
                                          uintptr_t len,
                                          uintptr_t *required);

// Builds a dataset from a row-major `n_rows × n_cols` array. `labels` may be
// null; otherwise it holds `n_rows` entries of 0 or 1.
//
// # Safety
// `values` must point to `n_rows * n_cols` doubles; `labels` to `n_rows` bytes or be null.
enum MetaodStatus metaod_dataset_from_rows(const double *values,
                                           uintptr_t n_rows,
                                           uintptr_t n_cols,
                                           const uint8_t *labels,
                                           struct MetaodDataset **out);

// Loads a CSV file. `label_column` may be null for unlabeled data.
//
// # Safety
// `path` and, if non-null, `label_column` must be NUL-terminated strings.
enum MetaodStatus metaod_dataset_load_csv(const char *path,
                                          const char *label_column,
                                          struct MetaodDataset **out);

// Releases a dataset. Null is ignored.
//
// # Safety
// `data` must come from this library and not be used afterwards.
void metaod_dataset_free(struct MetaodDataset *data);

// Selects a model for `data`. The chosen grid index goes to `out_index`;
// when `predicted` is non-null it receives one predicted score per model and
// must hold [`metaod_learner_n_models`] entries.
//
// # Safety
// Handles must be live; `out_index` writable; `predicted` valid for `predicted_len` doubles or null.
enum MetaodStatus metaod_select(const struct MetaodLearner *learner,
                                const struct MetaodDataset *data,
                                uint64_t seed,
                                uintptr_t *out_index,
                                double *predicted,
                                uintptr_t predicted_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METAOD_H */
