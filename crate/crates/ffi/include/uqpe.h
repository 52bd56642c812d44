#ifndef UQPE_H
#define UQPE_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum UqpeStatus {
  UQPE_STATUS_OK = 0,
  UQPE_STATUS_NULL_POINTER = 1,
  // Bad input: data shape, arguments, files.
  UQPE_STATUS_INVALID_INPUT = 2,
  // Numerical failure: rank deficiency, divergence, degenerate samples.
  UQPE_STATUS_NUMERIC = 3,
  // Output buffer shorter than required.
  UQPE_STATUS_BUFFER_TOO_SMALL = 4,
  // Internal panic caught at the boundary.
  UQPE_STATUS_PANIC = 5,
} UqpeStatus;

// Outcome, intercept, target and controls.
typedef struct UqpeDataset UqpeDataset;

// A fitted quantile regression process with matched curves.
typedef struct UqpeModel UqpeModel;

// Second-stage smoother selector.
typedef uint32_t UqpeMethod;

typedef struct UqpeEstimate {
  double tau;
  double estimate;
  double q_tau;
  double bandwidth;
  size_t n;
  // Grid size of the process; 0 for RIF baselines.
  size_t grid_m;
  size_t boundary_hits;
  // Estimated density of the outcome at `q_tau`; NaN for process-based estimates.
  double density_at_q;
  bool fell_back_to_nw;
} UqpeEstimate;

// RIF baseline selector.
typedef uint32_t UqpeRifVariant;

typedef struct UqpeInterval {
  double tau;
  double point;
  double se;
  double gaussian_lo;
  double gaussian_hi;
  double percentile_lo;
  double percentile_hi;
} UqpeInterval;

#define UQPE_METHOD_NW 0

#define UQPE_METHOD_LOCAL_LINEAR 1

#define UQPE_METHOD_LOCAL_LINEAR_LITERAL 2

#define UQPE_RIF_OLS_LINEAR 1

#define UQPE_RIF_OLS_QUADRATIC 2

#define UQPE_RIF_OLS_CUBIC 3

#define UQPE_RIF_LOGIT 4

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a success.
// Valid until the next call into the library on the same thread.
const char *uqpe_last_error_message(void);

// Library version as a static nul-terminated string.
const char *uqpe_version(void);

// Dataset from in-memory columns.
//
// `controls` holds `n_controls` columns of length `n`, column after column.
//
// # Safety
// `y` and `target` must point to `n` doubles, `controls` to `n * n_controls`
// doubles (or be null when `n_controls` is 0), and `out` to writable storage.
enum UqpeStatus uqpe_dataset_new(const double *y,
                                 const double *target,
                                 const double *controls,
                                 size_t n,
                                 size_t n_controls,
                                 struct UqpeDataset **out);

// Dataset from a CSV file with a header row.
//
// # Safety
// String arguments must be nul-terminated; `controls` must hold
// `n_controls` such strings (or be null when `n_controls` is 0).
enum UqpeStatus uqpe_dataset_load_csv(const char *path,
                                      const char *outcome,
                                      const char *target,
                                      const char *const *controls,
                                      size_t n_controls,
                                      bool drop_na,
                                      struct UqpeDataset **out);

// Number of observations, or 0 for a null handle.
//
// # Safety
// `data` must be null or a live handle.
size_t uqpe_dataset_n(const struct UqpeDataset *data);

// # Safety
// `data` must be null or a handle not yet freed.
void uqpe_dataset_free(struct UqpeDataset *data);

// Fits the quantile regression process on `grid_m` levels (0 selects the
// size paired with the sample size) and prepares matching.
//
// # Safety
// `data` must be a live handle and `out` writable.
enum UqpeStatus uqpe_model_fit(const struct UqpeDataset *data,
                               size_t grid_m,
                               double bandwidth_constant,
                               double bandwidth_exponent,
                               struct UqpeModel **out);

// Grid size of a fitted model, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t uqpe_model_grid_size(const struct UqpeModel *model);

// Copies the grid levels and the target slope at each level.
//
// # Safety
// `levels` and `slopes` must each hold `len` doubles.
enum UqpeStatus uqpe_model_slopes(const struct UqpeModel *model,
                                  double *levels,
                                  double *slopes,
                                  size_t len);

// Effect estimate at `tau`.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum UqpeStatus uqpe_model_estimate(const struct UqpeModel *model,
                                    double tau,
                                    UqpeMethod method,
                                    struct UqpeEstimate *out);

// Matched level and matched slope for every observation at `tau`.
//
// # Safety
// `xi` and `slopes` must each hold `len >= n` doubles.
enum UqpeStatus uqpe_model_matching(const struct UqpeModel *model,
                                    double tau,
                                    double *xi,
                                    double *slopes,
                                    size_t len);

// # Safety
// `model` must be null or a handle not yet freed.
void uqpe_model_free(struct UqpeModel *model);

// RIF-regression baseline at `tau`, with the density bandwidth from the
// given rule.
//
// # Safety
// `data` must be a live handle and `out` writable.
enum UqpeStatus uqpe_rif_estimate(const struct UqpeDataset *data,
                                  double tau,
                                  UqpeRifVariant variant,
                                  double bandwidth_constant,
                                  double bandwidth_exponent,
                                  struct UqpeEstimate *out);

// Pairwise bootstrap of the process-based estimator at each of `n_taus`
// levels, with `replications` resamples seeded by `seed`.
//
// # Safety
// `taus` must hold `n_taus` doubles and `out` room for `n_taus` intervals.
enum UqpeStatus uqpe_bootstrap(const struct UqpeDataset *data,
                               const double *taus,
                               size_t n_taus,
                               UqpeMethod method,
                               size_t grid_m,
                               double bandwidth_constant,
                               double bandwidth_exponent,
                               size_t replications,
                               uint64_t seed,
                               double alpha,
                               struct UqpeInterval *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UQPE_H */
