#ifndef ENTROPROP_H
#define ENTROPROP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EntLayerKind {
  ENT_LAYER_KIND_DENSE = 0,
  ENT_LAYER_KIND_CONV = 1,
} EntLayerKind;

// Result of every call. Families mirror the library's error codes.
typedef enum EntStatus {
  ENT_STATUS_OK = 0,
  ENT_STATUS_NULL_POINTER = 1,
  ENT_STATUS_INVALID_ARGUMENT = 2,
  ENT_STATUS_DIMENSION = 10,
  ENT_STATUS_SINGULAR = 11,
  ENT_STATUS_UNDEFINED_VARIANCE = 12,
  // bad magic, unsupported version, truncated or malformed input
  ENT_STATUS_FORMAT = 20,
  ENT_STATUS_MISSING_DATA = 21,
  ENT_STATUS_CONFIG = 3,
  ENT_STATUS_CHECK_FAILED = 30,
  ENT_STATUS_IO = 40,
  ENT_STATUS_PANIC = 99,
} EntStatus;

// Dense row-major matrix of doubles.
typedef struct EntMatrix EntMatrix;

// A network architecture plus its weights, as read from an ENTW dump.
typedef struct EntNetwork EntNetwork;

// Per-layer entropy-change profile of a network.
typedef struct EntProfile EntProfile;

// Summary of one profiled layer. Totals are in nats over the layer output;
// per-element values divide by the number of output elements.
typedef struct EntLayerSummary {
  uintptr_t layer_index;
  enum EntLayerKind kind;
  uintptr_t input_l;
  uintptr_t input_w;
  uintptr_t units;
  double mean_total;
  double median_total;
  double q1_total;
  double q3_total;
  double mean_per_element;
  uintptr_t outliers;
} EntLayerSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next call into this library from the same thread.
const char *ent_last_error_message(void);

// Static name of a status code, e.g. "ENT_STATUS_SINGULAR".
const char *ent_status_name(enum EntStatus status);

// Copies `rows * cols` row-major doubles from `data` into a new matrix.
//
// # Safety
// `data` must point to `rows * cols` readable doubles; `out` must be writable.
enum EntStatus ent_matrix_new(uintptr_t rows,
                              uintptr_t cols,
                              const double *data,
                              struct EntMatrix **out);

// Releases a matrix; NULL is a no-op.
//
// # Safety
// `m` must come from `ent_matrix_new` and not have been freed.
void ent_matrix_free(struct EntMatrix *m);

// # Safety
// `m` must be a live matrix handle; `rows`/`cols` must be writable.
enum EntStatus ent_matrix_shape(const struct EntMatrix *m, uintptr_t *rows, uintptr_t *cols);

// `log|det M|` and the determinant's sign (0 for singular, with
// `log_abs = -inf`).
//
// # Safety
// `m` must be a live matrix handle; out pointers must be writable.
enum EntStatus ent_logabsdet(const struct EntMatrix *m, double *log_abs, int8_t *sign);

// Entropy change in nats of a dense layer with weight `[out, in]`.
//
// # Safety
// `w` must be a live matrix handle; `delta` must be writable.
enum EntStatus ent_dense_entropy_delta(const struct EntMatrix *w, double *delta);

// Entropy change of a valid 2D convolution of an `l x w` input with
// `filter`, total and per output element.
//
// # Safety
// `filter` must be a live matrix handle; out pointers must be writable.
enum EntStatus ent_conv_entropy_delta(const struct EntMatrix *filter,
                                      uintptr_t l,
                                      uintptr_t w,
                                      double *delta_total,
                                      double *delta_per_element);

// Reads an ENTW weight dump from a NUL-terminated UTF-8 path.
//
// # Safety
// `path` must be a valid C string; `out` must be writable.
enum EntStatus ent_network_load(const char *path, struct EntNetwork **out);

// Decodes an ENTW weight dump from memory.
//
// # Safety
// `bytes` must point to `len` readable bytes; `out` must be writable.
enum EntStatus ent_network_from_bytes(const uint8_t *bytes, uintptr_t len, struct EntNetwork **out);

// Releases a network; NULL is a no-op.
//
// # Safety
// `n` must come from an `ent_network_*` constructor and not have been freed.
void ent_network_free(struct EntNetwork *n);

// Number of layers (including pooling and activations).
//
// # Safety
// `n` must be a live network handle; `count` must be writable.
enum EntStatus ent_network_num_layers(const struct EntNetwork *n, uintptr_t *count);

// Profiles every dense and conv layer of `n` for an `input_h x input_w`
// input.
//
// # Safety
// `n` must be a live network handle; `out` must be writable.
enum EntStatus ent_profile_network(const struct EntNetwork *n,
                                   uintptr_t input_h,
                                   uintptr_t input_w,
                                   struct EntProfile **out);

// Releases a profile; NULL is a no-op.
//
// # Safety
// `p` must come from `ent_profile_network` and not have been freed.
void ent_profile_free(struct EntProfile *p);

// Number of profiled (dense + conv) layers.
//
// # Safety
// `p` must be a live profile handle; `count` must be writable.
enum EntStatus ent_profile_num_layers(const struct EntProfile *p, uintptr_t *count);

// Summary of the `i`-th profiled layer.
//
// # Safety
// `p` must be a live profile handle; `out` must be writable.
enum EntStatus ent_profile_layer(const struct EntProfile *p,
                                 uintptr_t i,
                                 struct EntLayerSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENTROPROP_H */
