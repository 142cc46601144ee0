#ifndef SPIR_H
#define SPIR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum SpirStatus {
  SPIR_STATUS_OK = 0,
  SPIR_STATUS_CONFIG = 2,
  SPIR_STATUS_PROTOCOL = 3,
  SPIR_STATUS_BUDGET_EXHAUSTED = 4,
  SPIR_STATUS_IO = 5,
  SPIR_STATUS_INVALID_ARGUMENT = 6,
  SPIR_STATUS_KEY_REUSE = 7,
  SPIR_STATUS_NULL_POINTER = 8,
  SPIR_STATUS_BUFFER_TOO_SMALL = 9,
  SPIR_STATUS_PANIC = 10,
} SpirStatus;

// Database cube plus the true record lengths.
typedef struct SpirCube SpirCube;

// Two simulated data centres and a user, provisioned with caller keys.
typedef struct SpirSim SpirSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Null-terminated library version. Static storage; do not free.
const char *spir_version(void);

// Copies the last error message on this thread into `buf` (truncated and
// always NUL-terminated when `cap > 0`). Returns the full message length
// including the terminator, or 0 if there is none.
//
// # Safety
// `buf` must be valid for `cap` writes, or null with `cap == 0`.
size_t spir_last_error_message(char *buf, size_t cap);

// Key bits one retrieval needs on each user↔DC link and on the DC↔DC link.
//
// # Safety
// Output pointers must be valid for writes.
enum SpirStatus spir_required_key_budget(size_t n,
                                         size_t entry_bits,
                                         uint64_t *user_dc_bits,
                                         uint64_t *dc_dc_bits);

// Finite-key length with the security parameter split equally.
//
// # Safety
// `out` must be valid for writes.
enum SpirStatus spir_finite_key_length(double n0,
                                       double n1,
                                       double e1,
                                       double leak_ec,
                                       double eps_sec,
                                       double eps_cor,
                                       uint64_t *out);

// Toeplitz hash of `input_bits` bits down to `out_bits` bits. The seed
// holds `input_bits + out_bits - 1` bits. Bits are packed LSB-first.
//
// # Safety
// Input buffers must hold the stated bit counts; `out` must be valid for
// `out_cap` writes.
enum SpirStatus spir_toeplitz_hash(const uint8_t *input,
                                   size_t input_bits,
                                   const uint8_t *seed,
                                   size_t seed_bits,
                                   size_t out_bits,
                                   uint8_t *out,
                                   size_t out_cap);

// Builds a cube from `n` records stored back to back in `data`, record
// `i` being `lens[i]` bytes.
//
// # Safety
// `lens` must hold `n` entries and `data` their sum in bytes; `out` must
// be valid for writes.
enum SpirStatus spir_cube_new(const uint8_t *data,
                              const size_t *lens,
                              size_t n,
                              struct SpirCube **out);

// # Safety
// `cube` must come from [`spir_cube_new`] and not be used afterwards.
void spir_cube_free(struct SpirCube *cube);

// Writes `n`, `L` (bits) and the cube side `m`.
//
// # Safety
// `cube` must be a live handle; outputs valid for writes.
enum SpirStatus spir_cube_shape(const struct SpirCube *cube,
                                size_t *n,
                                size_t *entry_bits,
                                size_t *side);

// Starts two simulated data centres over a copy of `cube`, provisioned
// with the given link keys.
//
// # Safety
// Key buffers must be valid for their lengths; `cube` a live handle;
// `out` valid for writes.
enum SpirStatus spir_sim_new(const struct SpirCube *cube,
                             const uint8_t *user_dc1,
                             size_t user_dc1_len,
                             const uint8_t *user_dc2,
                             size_t user_dc2_len,
                             const uint8_t *dc_dc,
                             size_t dc_dc_len,
                             struct SpirSim **out);

// Retrieves record `index`. On success `*out_len` is the record length;
// on `BUFFER_TOO_SMALL` it is the length needed (key bits are spent
// either way).
//
// # Safety
// `sim` must be a live handle; `out` valid for `cap` writes; `out_len`
// valid for writes.
enum SpirStatus spir_sim_retrieve(struct SpirSim *sim,
                                  size_t index,
                                  uint64_t seed,
                                  uint8_t *out,
                                  size_t cap,
                                  size_t *out_len);

// Number of alarms the non-communication monitor has raised.
//
// # Safety
// `sim` must be a live handle; `count` valid for writes.
enum SpirStatus spir_sim_alarm_count(const struct SpirSim *sim, size_t *count);

// # Safety
// `sim` must come from [`spir_sim_new`] and not be used afterwards.
void spir_sim_free(struct SpirSim *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPIR_H */
