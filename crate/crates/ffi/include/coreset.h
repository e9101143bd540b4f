#ifndef CORESET_H
#define CORESET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum CsStatus {
  CS_STATUS_OK = 0,
  CS_STATUS_NULL_POINTER = 1,
  CS_STATUS_INVALID_ARGUMENT = 2,
  CS_STATUS_INFEASIBLE = 3,
  CS_STATUS_CAP_EXCEEDED = 4,
  CS_STATUS_PARSE = 5,
  CS_STATUS_IO = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  CS_STATUS_INTERNAL = 7,
} CsStatus;

typedef struct CsCoreset CsCoreset;

typedef struct CsFamily CsFamily;

typedef struct CsPointSet CsPointSet;

typedef struct CsStream CsStream;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`) and returns its full length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t cs_last_error_message(char *buf, uintptr_t len);

/**
 * Library version, a static NUL-terminated string.
 */
const char *cs_version(void);

/**
 * Creates an empty point set of dimension `dim`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CsStatus cs_pointset_new(uintptr_t dim, struct CsPointSet **out);

/**
 * Appends one point with `dim` coordinates, a color and a positive weight.
 *
 * # Safety
 * `set` must be a live handle and `coords` must hold `dim` doubles.
 */
enum CsStatus cs_pointset_push(struct CsPointSet *set,
                               const double *coords,
                               uintptr_t dim,
                               uint32_t color,
                               uint64_t weight);

/**
 * Number of entries, or 0 for a null handle.
 *
 * # Safety
 * `set` must be null or a live handle.
 */
uintptr_t cs_pointset_len(const struct CsPointSet *set);

/**
 * # Safety
 * `set` must be null or a live handle; it is invalid afterwards.
 */
void cs_pointset_free(struct CsPointSet *set);

/**
 * Builds a certified movement coreset. `m` is 1 (k-median) or 2 (k-means).
 *
 * # Safety
 * `set` must be a live handle and `out` writable.
 */
enum CsStatus cs_coreset_build(const struct CsPointSet *set,
                               uintptr_t k,
                               double eps,
                               uint32_t m,
                               uint64_t seed,
                               struct CsCoreset **out);

/**
 * Number of weighted entries, or 0 for a null handle.
 *
 * # Safety
 * `coreset` must be null or a live handle.
 */
uintptr_t cs_coreset_len(const struct CsCoreset *coreset);

/**
 * Copies entry `index`: `dim` coordinates, its color and its weight.
 *
 * # Safety
 * `coreset` must be a live handle, `coords` must have room for `dim`
 * doubles, `color` and `weight` must be writable.
 */
enum CsStatus cs_coreset_entry(const struct CsCoreset *coreset,
                               uintptr_t index,
                               double *coords,
                               uintptr_t dim,
                               uint32_t *color,
                               uint64_t *weight);

/**
 * Checks the coreset's movement certificate against the original points;
 * `ok` receives 1 when every check passes.
 *
 * # Safety
 * Both handles must be live and `ok` writable.
 */
enum CsStatus cs_coreset_verify(const struct CsPointSet *set,
                                const struct CsCoreset *coreset,
                                int32_t *ok);

/**
 * Union of two coresets with summed certificates.
 *
 * # Safety
 * Both handles must be live and `out` writable.
 */
enum CsStatus cs_coreset_merge(const struct CsCoreset *a,
                               const struct CsCoreset *b,
                               struct CsCoreset **out);

/**
 * # Safety
 * `coreset` must be null or a live handle; it is invalid afterwards.
 */
void cs_coreset_free(struct CsCoreset *coreset);

/**
 * Starts a merge-and-reduce stream.
 *
 * # Safety
 * `out` must be writable.
 */
enum CsStatus cs_stream_new(uintptr_t block,
                            uintptr_t k,
                            double eps,
                            uint32_t m,
                            uint64_t seed,
                            struct CsStream **out);

/**
 * Feeds one point to the stream.
 *
 * # Safety
 * `stream` must be a live handle and `coords` must hold `dim` doubles.
 */
enum CsStatus cs_stream_push(struct CsStream *stream,
                             const double *coords,
                             uintptr_t dim,
                             uint32_t color,
                             uint64_t weight);

/**
 * Summary of everything pushed so far; the stream keeps running.
 *
 * # Safety
 * `stream` must be a live handle and `out` writable.
 */
enum CsStatus cs_stream_snapshot(const struct CsStream *stream, struct CsCoreset **out);

/**
 * # Safety
 * `stream` must be null or a live handle; it is invalid afterwards.
 */
void cs_stream_free(struct CsStream *stream);

/**
 * Parses a constraint description such as `kind=lower_bounds; bounds=4,4`
 * and binds it to `k` regular clusters and the points in `set`. Link
 * constraints recolor `set` in place.
 *
 * # Safety
 * `spec` must be a NUL-terminated string, `set` a live handle, `out` writable.
 */
enum CsStatus cs_family_parse(const char *spec,
                              uintptr_t k,
                              struct CsPointSet *set,
                              struct CsFamily **out);

/**
 * Number of centers the family expects, outlier slots included.
 *
 * # Safety
 * `family` must be null or a live handle.
 */
uintptr_t cs_family_clusters(const struct CsFamily *family);

/**
 * # Safety
 * `family` must be null or a live handle; it is invalid afterwards.
 */
void cs_family_free(struct CsFamily *family);

/**
 * Optimal constrained cost of `count` centers (row-major, `dim` each) on
 * the points. A null `family` means unconstrained; for outlier families
 * only the regular centers are passed.
 *
 * # Safety
 * `set` must be live, `family` null or live, `centers` must hold
 * `count * dim` doubles and `cost` be writable.
 */
enum CsStatus cs_eval(const struct CsPointSet *set,
                      const struct CsFamily *family,
                      const double *centers,
                      uintptr_t count,
                      uintptr_t dim,
                      uint32_t m,
                      double *cost);

/**
 * As [`cs_eval`], on a coreset's weighted entries.
 *
 * # Safety
 * As [`cs_eval`].
 */
enum CsStatus cs_coreset_eval(const struct CsCoreset *coreset,
                              const struct CsFamily *family,
                              const double *centers,
                              uintptr_t count,
                              uintptr_t dim,
                              uint32_t m,
                              double *cost);

/**
 * Summarizes the points at `eps / 3`, solves the summary and evaluates the
 * result on the points. `centers_out` receives `clusters * dim` doubles
 * where `clusters` is [`cs_family_clusters`] (or `k` for a null family);
 * `capacity` is its length in doubles.
 *
 * # Safety
 * `set` live, `family` null or live, `centers_out` holds `capacity`
 * doubles, `cost` writable.
 */
enum CsStatus cs_solve(const struct CsPointSet *set,
                       const struct CsFamily *family,
                       uintptr_t k,
                       double eps,
                       uint32_t m,
                       uint64_t seed,
                       double *centers_out,
                       uintptr_t capacity,
                       double *cost);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CORESET_H */
