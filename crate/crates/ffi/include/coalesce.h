#ifndef COALESCE_H
#define COALESCE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum CoalesceStatus {
  COALESCE_STATUS_OK = 0,
  COALESCE_STATUS_NULL_POINTER = 1,
  COALESCE_STATUS_INVALID_UTF8 = 2,
  COALESCE_STATUS_DOMAIN = 3,
  COALESCE_STATUS_CONFIG = 4,
  COALESCE_STATUS_NUMERIC = 5,
  COALESCE_STATUS_PARSE = 6,
  COALESCE_STATUS_IO = 7,
  COALESCE_STATUS_INTERNAL = 8,
  COALESCE_STATUS_PANIC = 9,
} CoalesceStatus;

// A finished experiment with its per-replica table and checks.
typedef struct CoalesceExperiment CoalesceExperiment;

// A 1-periodic test function.
typedef struct CoalesceFunction CoalesceFunction;

// Kernel evaluator at a fixed time.
typedef struct CoalesceKernel CoalesceKernel;

// A locally finite point measure.
typedef struct CoalesceMeasure CoalesceMeasure;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *coalesce_version(void);

// Message of the last failed call on this thread, or null if none.
//
// The pointer stays valid until the next failing call on the same thread.
const char *coalesce_last_error_message(void);

// Static name of a status code.
const char *coalesce_status_name(enum CoalesceStatus status);

// Releases a string returned by this library.
//
// # Safety
// `s` must be null or a pointer obtained from this library that has not
// been freed.
void coalesce_string_free(char *s);

// Creates a kernel evaluator at time `t > 0`.
//
// # Safety
// `out` must be a valid pointer to writable storage.
enum CoalesceStatus coalesce_kernel_new(double t, struct CoalesceKernel **out);

// # Safety
// `k` must be null or a handle from [`coalesce_kernel_new`].
void coalesce_kernel_free(struct CoalesceKernel *k);

// Intensity `1/sqrt(pi t)`.
//
// # Safety
// `k` must be a live kernel handle and `out` writable.
enum CoalesceStatus coalesce_kernel_rho1(const struct CoalesceKernel *k, double *out);

// Pair density at separation `z`.
//
// # Safety
// `k` must be a live kernel handle and `out` writable.
enum CoalesceStatus coalesce_kernel_rho2(const struct CoalesceKernel *k, double z, double *out);

// Pair correlation `rho2(z) - 1/(pi t)`.
//
// # Safety
// `k` must be a live kernel handle and `out` writable.
enum CoalesceStatus coalesce_kernel_g(const struct CoalesceKernel *k, double z, double *out);

// Symmetrized lattice kernel at `(u, v)`.
//
// # Safety
// `k` must be a live kernel handle and `out` writable.
enum CoalesceStatus coalesce_kernel_g_sym(const struct CoalesceKernel *k,
                                          double u,
                                          double v,
                                          double *out);

// Limiting variance of `X_t^n(f)`.
//
// # Safety
// Handles must be live and `out` writable.
enum CoalesceStatus coalesce_kernel_sigma2(const struct CoalesceKernel *k,
                                           const struct CoalesceFunction *f,
                                           double *out);

// Limiting covariance of `X_t^n(f)` and `X_t^n(h)`.
//
// # Safety
// Handles must be live and `out` writable.
enum CoalesceStatus coalesce_kernel_cov(const struct CoalesceKernel *k,
                                        const struct CoalesceFunction *f,
                                        const struct CoalesceFunction *h,
                                        double *out);

// Closed-form mixing bound at distance `h > 0`.
//
// # Safety
// `k` must be a live kernel handle and `out` writable.
enum CoalesceStatus coalesce_kernel_mixing_bound(const struct CoalesceKernel *k,
                                                 double h,
                                                 double *out);

// Density at `u` of the common position of paths started at `a <= b`
// that have met by elapsed time `s`.
//
// # Safety
// `out` must be writable.
enum CoalesceStatus coalesce_q_density(double s, double a, double b, double u, double *out);

// Parses a function such as `cos(1)`, `hatwave(0.1)` or `2*haar(1,0)`.
//
// # Safety
// `text` must be a NUL-terminated string and `out` writable.
enum CoalesceStatus coalesce_function_parse(const char *text, struct CoalesceFunction **out);

// # Safety
// `f` must be a live function handle and `out` writable.
enum CoalesceStatus coalesce_function_eval(const struct CoalesceFunction *f, double x, double *out);

// # Safety
// `f` must be null or a handle from [`coalesce_function_parse`].
void coalesce_function_free(struct CoalesceFunction *f);

// Builds a measure from `len` strictly increasing atoms inside `[lo, hi]`.
//
// # Safety
// `atoms` must point to `len` readable doubles (or be null when `len` is
// zero) and `out` must be writable.
enum CoalesceStatus coalesce_measure_new(const double *atoms,
                                         size_t len,
                                         double lo,
                                         double hi,
                                         struct CoalesceMeasure **out);

// Simulates replica `replica` of the flow under `seed` and returns the
// atoms of `N_t` in `[lo, hi]`, using the default grid.
//
// # Safety
// `out` must be writable.
enum CoalesceStatus coalesce_measure_simulate(double lo,
                                              double hi,
                                              double t,
                                              uint64_t seed,
                                              uint32_t replica,
                                              struct CoalesceMeasure **out);

// # Safety
// `m` must be a live measure handle and `out` writable.
enum CoalesceStatus coalesce_measure_len(const struct CoalesceMeasure *m, size_t *out);

// Copies up to `cap` atoms into `buf` and stores the total count in
// `total`.
//
// # Safety
// `buf` must have room for `cap` doubles (it may be null when `cap` is 0)
// and `total` must be writable.
enum CoalesceStatus coalesce_measure_atoms(const struct CoalesceMeasure *m,
                                           double *buf,
                                           size_t cap,
                                           size_t *total);

// `X_t^n(f)` for the measure, using the kernel's time for the centering.
//
// # Safety
// Handles must be live and `out` writable.
enum CoalesceStatus coalesce_measure_clt_statistic(const struct CoalesceMeasure *m,
                                                   const struct CoalesceFunction *f,
                                                   size_t n,
                                                   const struct CoalesceKernel *k,
                                                   double *out);

// # Safety
// `m` must be null or a measure handle from this library.
void coalesce_measure_free(struct CoalesceMeasure *m);

// Runs an experiment from its JSON config. `threads == 0` uses the
// default pool. A completed run returns `Ok` even when checks fail; query
// [`coalesce_experiment_passed`].
//
// # Safety
// `config_json` must be NUL-terminated and `out` writable.
enum CoalesceStatus coalesce_experiment_run(const char *config_json,
                                            uint32_t threads,
                                            struct CoalesceExperiment **out);

// # Safety
// `e` must be a live experiment handle and `out` writable.
enum CoalesceStatus coalesce_experiment_passed(const struct CoalesceExperiment *e, bool *out);

// Summary, predictions and checks as JSON; free with
// [`coalesce_string_free`].
//
// # Safety
// `e` must be a live experiment handle and `out` writable.
enum CoalesceStatus coalesce_experiment_summary_json(const struct CoalesceExperiment *e,
                                                     char **out);

// Per-replica table as CSV; free with [`coalesce_string_free`].
//
// # Safety
// `e` must be a live experiment handle and `out` writable.
enum CoalesceStatus coalesce_experiment_replicas_csv(const struct CoalesceExperiment *e,
                                                     char **out);

// # Safety
// `e` must be null or a handle from [`coalesce_experiment_run`].
void coalesce_experiment_free(struct CoalesceExperiment *e);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COALESCE_H */
