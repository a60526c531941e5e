#ifndef PBOOT_H
#define PBOOT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Call outcome.
typedef enum PbootStatus {
  PBOOT_STATUS_OK = 0,
  PBOOT_STATUS_NULL_ARGUMENT = 1,
  PBOOT_STATUS_INVALID_ARGUMENT = 2,
  PBOOT_STATUS_DATA_ERROR = 3,
  PBOOT_STATUS_STATISTIC_ERROR = 4,
  PBOOT_STATUS_PLAN_TOO_LARGE = 5,
  PBOOT_STATUS_WORKER_ERROR = 6,
  PBOOT_STATUS_ESTIMATE_ERROR = 7,
  PBOOT_STATUS_IO_ERROR = 8,
  PBOOT_STATUS_BUFFER_TOO_SMALL = 9,
  PBOOT_STATUS_PANIC = 10,
} PbootStatus;

typedef enum PbootMode {
  PBOOT_MODE_SERIAL = 0,
  PBOOT_MODE_THREADED = 1,
  PBOOT_MODE_MULTI_PROCESS = 2,
} PbootMode;

// Opaque dataset handle.
typedef struct PbootDataset PbootDataset;

// Opaque result handle.
typedef struct PbootResult PbootResult;

// Phase durations of one run, nanoseconds.
typedef struct PbootTimings {
  uint64_t plan_ns;
  uint64_t scatter_ns;
  uint64_t evaluate_ns;
  uint64_t reduce_ns;
  uint64_t total_ns;
} PbootTimings;

// Estimates for one output dimension.
typedef struct PbootEstimate {
  double t0;
  double bias;
  double se;
  double ci_lower;
  double ci_upper;
} PbootEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *pboot_version(void);

// Message of the last failed call on this thread, or "" after a success.
// Valid until the next pboot call on the same thread.
const char *pboot_last_error(void);

// Builds a dataset from `ncols` columns of `nrows` values each.
//
// # Safety
// `names` holds `ncols` NUL-terminated strings, `columns` holds `ncols`
// pointers to `nrows` doubles each, `out` is writable.
enum PbootStatus pboot_dataset_from_columns(const char *const *names,
                                            const double *const *columns,
                                            size_t ncols,
                                            size_t nrows,
                                            struct PbootDataset **out);

// Loads a CSV table with a header row.
//
// # Safety
// `path` is a NUL-terminated string and `out` is writable.
enum PbootStatus pboot_dataset_load_csv(const char *path, struct PbootDataset **out);

// Synthetic expression matrix: `genes` rows, `group1 + group2` sample columns.
//
// # Safety
// `out` is writable.
enum PbootStatus pboot_dataset_synth(size_t genes,
                                     size_t group1,
                                     size_t group2,
                                     uint64_t seed,
                                     struct PbootDataset **out);

// Number of observations, 0 for a null handle.
//
// # Safety
// `data` is null or a live dataset handle.
size_t pboot_dataset_nrows(const struct PbootDataset *data);

// Number of columns, 0 for a null handle.
//
// # Safety
// `data` is null or a live dataset handle.
size_t pboot_dataset_ncols(const struct PbootDataset *data);

// # Safety
// `data` is null or a handle not yet freed.
void pboot_dataset_free(struct PbootDataset *data);

// Runs one bootstrap.
//
// `statistic` uses the command-line syntax (`median`, `ratio:x:u`, ...).
// `stype` is `'i'`, `'f'`, `'w'` or 0 for the statistic's default.
// `workers` is ignored for serial runs; `max_plan_bytes` 0 means the default.
//
// # Safety
// `data` is a live dataset handle, `statistic` a NUL-terminated string and
// `out` writable.
enum PbootStatus pboot_run(const struct PbootDataset *data,
                           const char *statistic,
                           size_t resamples,
                           char stype,
                           uint64_t seed,
                           enum PbootMode mode,
                           size_t workers,
                           uint64_t max_plan_bytes,
                           struct PbootResult **out);

// Output dimension `p`, 0 for a null handle.
//
// # Safety
// `result` is null or a live result handle.
size_t pboot_result_dimension(const struct PbootResult *result);

// Number of replicate rows `R`, 0 for a null handle.
//
// # Safety
// `result` is null or a live result handle.
size_t pboot_result_resamples(const struct PbootResult *result);

// Copies `t0` (`p` values) into `buf`.
//
// # Safety
// `result` is a live result handle and `buf` has room for `len` doubles.
enum PbootStatus pboot_result_t0(const struct PbootResult *result, double *buf, size_t len);

// Copies the `R x p` replicates, row-major, into `buf`.
//
// # Safety
// `result` is a live result handle and `buf` has room for `len` doubles.
enum PbootStatus pboot_result_replicates(const struct PbootResult *result, double *buf, size_t len);

// # Safety
// `result` is a live result handle and `out` writable.
enum PbootStatus pboot_result_timings(const struct PbootResult *result, struct PbootTimings *out);

// Bias, standard error and percentile interval at level `1 - alpha`, one
// entry per dimension.
//
// # Safety
// `result` is a live result handle and `buf` has room for `len` entries.
enum PbootStatus pboot_result_estimates(const struct PbootResult *result,
                                        double alpha,
                                        struct PbootEstimate *buf,
                                        size_t len);

// # Safety
// `result` is null or a handle not yet freed.
void pboot_result_free(struct PbootResult *result);

// `t_serial / t_p`; both times must be positive.
//
// # Safety
// `out` is writable.
enum PbootStatus pboot_speedup(double t_serial, double t_p, double *out);

// `speedup / p`.
double pboot_efficiency(double speedup, size_t p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PBOOT_H */
