#ifndef TWINFORMER_H
#define TWINFORMER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TfStatus {
  TF_STATUS_OK = 0,
  TF_STATUS_NULL_POINTER = 1,
  TF_STATUS_INVALID_ARGUMENT = 2,
  TF_STATUS_CONFIG = 3,
  TF_STATUS_DATA = 4,
  TF_STATUS_NUMERIC = 5,
  TF_STATUS_CHECKPOINT = 6,
  TF_STATUS_IO = 7,
  TF_STATUS_PANIC = 8,
} TfStatus;

// Opaque model handle.
typedef struct TfModel TfModel;

// Architecture of a model; mirrors the `[model]` section of a run config
// plus the input width and target column.
typedef struct TfModelConfig {
  size_t seq_len;
  size_t patch_len;
  size_t d_model;
  size_t heads;
  size_t top_k;
  size_t ffn_mult;
  size_t horizon;
  size_t n_features;
  size_t target_index;
} TfModelConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *tf_version(void);

// Message of the last failure on this thread, or NULL. The pointer stays
// valid until the next failing call or `tf_clear_error` on this thread.
const char *tf_last_error(void);

void tf_clear_error(void);

// Creates a freshly initialised model. Its forecasts are in normalized
// units only (see `tf_model_predict`).
//
// # Safety
// `config` must point to a valid `TfModelConfig`; `out` to writable storage
// for one handle.
enum TfStatus tf_model_new(const struct TfModelConfig *config, uint64_t seed, struct TfModel **out);

// Loads a checkpoint written by `twinformer train` or `tf_model_save`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` writable storage for one
// handle.
enum TfStatus tf_model_load(const char *path, struct TfModel **out);

// # Safety
// `model` must be a live handle; `path` a NUL-terminated string.
enum TfStatus tf_model_save(const struct TfModel *model, const char *path);

// Copies the model's architecture into `out`.
//
// # Safety
// `model` must be a live handle; `out` writable.
enum TfStatus tf_model_config(const struct TfModel *model, struct TfModelConfig *out);

// 1 if the model carries fitted scaler statistics (so `tf_model_forecast`
// works), 0 if not, -1 for a NULL handle.
//
// # Safety
// `model` must be NULL or a live handle.
int32_t tf_model_has_scaler(const struct TfModel *model);

// Forecast for one normalized window of `seq_len × n_features` values in
// row-major order. Writes `horizon` normalized values to `out`.
//
// # Safety
// `window` must hold `window_len` readable values and `out` `out_len`
// writable ones.
enum TfStatus tf_model_predict(const struct TfModel *model,
                               const double *window,
                               size_t window_len,
                               double *out,
                               size_t out_len);

// Forecast in original units from the last `seq_len` of `n_rows` raw rows
// (`n_rows × n_features`, row-major, columns in training order). Requires
// a model loaded from a training checkpoint.
//
// # Safety
// `rows` must hold `n_rows × n_features` readable values and `out`
// `out_len` writable ones.
enum TfStatus tf_model_forecast(const struct TfModel *model,
                                const double *rows,
                                size_t n_rows,
                                double *out,
                                size_t out_len);

// Releases a handle. NULL is ignored.
//
// # Safety
// `model` must be NULL or a handle not yet freed.
void tf_model_free(struct TfModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWINFORMER_H */
