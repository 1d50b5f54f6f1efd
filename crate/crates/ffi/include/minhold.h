#ifndef MINHOLD_H
#define MINHOLD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MhStatus {
  MH_STATUS_OK = 0,
  MH_STATUS_NULL_POINTER = 1,
  MH_STATUS_INVALID_ARGUMENT = 2,
  MH_STATUS_SIZE = 3,
  MH_STATUS_PARSE = 4,
  MH_STATUS_IO = 5,
  MH_STATUS_EMPTY_UNIVERSE = 6,
  MH_STATUS_EMPTY_POOL = 7,
  /**
   * `mh_verify_weights` found an early sale.
   */
  MH_STATUS_VIOLATION = 8,
  MH_STATUS_BUFFER_TOO_SMALL = 9,
  MH_STATUS_PANIC = 10,
} MhStatus;

/**
 * Deduplicated sample pool, ascending energy.
 */
typedef struct MhPool MhPool;

/**
 * A step QUBO, optionally with the encoding that produced it.
 */
typedef struct MhQubo MhQubo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *mh_last_error_message(void);

/**
 * Static, NUL-terminated crate version.
 */
const char *mh_version(void);

/**
 * Builds the per-step QUBO for `n_assets` assets. `sigma` is row-major
 * `n_assets × n_assets`. A NaN `rho` selects the automatic penalty weight.
 *
 * # Safety
 * `mu` and `sigma` must point to `n_assets` and `n_assets²` doubles; `out`
 * must be a valid pointer to write the handle to.
 */
enum MhStatus mh_qubo_build(const double *mu,
                            const double *sigma,
                            size_t n_assets,
                            double gamma,
                            double rho,
                            uint32_t bit_depth,
                            uint32_t bundles,
                            struct MhQubo **out);

/**
 * Wraps an arbitrary `n × n` row-major coefficient matrix (symmetrized).
 *
 * # Safety
 * `q` must point to `n²` doubles and `out` must be writable.
 */
enum MhStatus mh_qubo_from_matrix(const double *q, size_t n, double offset, struct MhQubo **out);

/**
 * # Safety
 * `qubo` must come from `mh_qubo_build`/`mh_qubo_from_matrix` and not be
 * used afterwards. Null is ignored.
 */
void mh_qubo_free(struct MhQubo *qubo);

/**
 * Number of binary variables, 0 for a null handle.
 *
 * # Safety
 * `qubo` must be null or a live handle.
 */
size_t mh_qubo_num_bits(const struct MhQubo *qubo);

/**
 * # Safety
 * `qubo` must be live, `bits` must hold `n_bits` bytes, `energy` writable.
 */
enum MhStatus mh_qubo_energy(const struct MhQubo *qubo,
                             const uint8_t *bits,
                             size_t n_bits,
                             double *energy);

/**
 * Exact minimizer by enumeration (at most 24 bits).
 *
 * # Safety
 * `qubo` must be live, `out_bits` must hold `n_bits` bytes, `energy`
 * writable.
 */
enum MhStatus mh_qubo_brute_force(const struct MhQubo *qubo,
                                  uint8_t *out_bits,
                                  size_t n_bits,
                                  double *energy);

/**
 * Writes the text export (header plus upper-triangular entries) as a
 * NUL-terminated string. `required` receives the size including the NUL;
 * a null or short buffer yields `BufferTooSmall` with `required` set.
 *
 * # Safety
 * `qubo` must be live; `buf` must hold `buf_len` bytes or be null;
 * `required` writable.
 */
enum MhStatus mh_qubo_to_text(const struct MhQubo *qubo,
                              char *buf,
                              size_t buf_len,
                              size_t *required);

/**
 * Decodes a bit vector into `n_assets` weights. Only for handles built by
 * `mh_qubo_build`.
 *
 * # Safety
 * `qubo` must be live, `bits` hold `n_bits` bytes, `weights` hold
 * `n_assets` doubles.
 */
enum MhStatus mh_qubo_decode(const struct MhQubo *qubo,
                             const uint8_t *bits,
                             size_t n_bits,
                             double *weights,
                             size_t n_assets);

/**
 * Simulated annealing with the default geometric schedule. `stream`
 * separates independent calls that share a seed.
 *
 * # Safety
 * `qubo` must be live and `out` writable.
 */
enum MhStatus mh_sample(const struct MhQubo *qubo,
                        size_t n_reads,
                        size_t sweeps,
                        uint64_t seed,
                        uint64_t stream,
                        struct MhPool **out);

/**
 * # Safety
 * `pool` must come from `mh_sample` and not be used afterwards. Null is
 * ignored.
 */
void mh_pool_free(struct MhPool *pool);

/**
 * Distinct states in the pool, 0 for a null handle.
 *
 * # Safety
 * `pool` must be null or live.
 */
size_t mh_pool_len(const struct MhPool *pool);

/**
 * Copies entry `index` (0 = lowest energy). Any of `energy` and
 * `multiplicity` may be null.
 *
 * # Safety
 * `pool` must be live and `out_bits` hold `n_bits` bytes.
 */
enum MhStatus mh_pool_entry(const struct MhPool *pool,
                            size_t index,
                            uint8_t *out_bits,
                            size_t n_bits,
                            double *energy,
                            uint32_t *multiplicity);

/**
 * Checks a row-major `n_steps × n_assets` weight table against a holding
 * period. Returns `Violation` and fills `step`/`asset` (either may be null)
 * for the first early sale.
 *
 * # Safety
 * `weights` must hold `n_steps · n_assets` doubles.
 */
enum MhStatus mh_verify_weights(const double *weights,
                                size_t n_steps,
                                size_t n_assets,
                                size_t hold,
                                size_t *step,
                                size_t *asset);

/**
 * Runs the whole pipeline for a TOML config file, writing its artifacts.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string.
 */
enum MhStatus mh_run_optimize(const char *config_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MINHOLD_H */
