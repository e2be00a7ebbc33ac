#ifndef PRICECLUSTER_H
#define PRICECLUSTER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
enum PcStatus
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  Ok = 0,
  NullPointer = 1,
  InvalidArgument = 2,
  DomainError = 3,
  EstimationFailed = 4,
  Panic = 5,
};
#ifndef __cplusplus
typedef int32_t PcStatus;
#endif // __cplusplus

/**
 * Opaque fit-result handle.
 */
typedef struct PcFit PcFit;

/**
 * Opaque tick-series handle.
 */
typedef struct PcSeries PcSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Log-pmf of the double Poisson distribution with the analytic
 * normalization constant.
 */
PcStatus pc_dp_log_pmf(double mu, double alpha, uint64_t y, double *out);

/**
 * Log-likelihood of one observation under the nickel-and-dime mixture.
 */
PcStatus pc_mixture_log_lik(double mu,
                            double alpha,
                            double phi1,
                            double phi5,
                            double phi10,
                            uint64_t y,
                            double *out);

/**
 * Builds a single-day tick series from parallel arrays of prices (in
 * ticks), durations, and volumes. The returned handle must be released
 * with `pc_series_free`.
 */
PcStatus pc_series_new(const uint64_t *y,
                       const double *z,
                       const double *v,
                       uintptr_t n,
                       struct PcSeries **out);

/**
 * Simulates a series from the dynamic model. Parameter layout:
 * c, b, a, d, f, g1, g2, g3, g4, h5, h10.
 */
PcStatus pc_simulate(const double *params,
                     uint64_t y0,
                     uint64_t seed,
                     uintptr_t n,
                     struct PcSeries **out);

uintptr_t pc_series_len(const struct PcSeries *series);

/**
 * Copies prices (in ticks) into a caller buffer of length `n`.
 */
PcStatus pc_series_prices(const struct PcSeries *series, uint64_t *buf, uintptr_t n);

void pc_series_free(struct PcSeries *series);

/**
 * Fits the model by conditional maximum likelihood. `variant` selects
 * the restriction: 0 no clustering, 1 static clustering, 2 dynamic
 * clustering. The returned handle must be released with `pc_fit_free`.
 */
PcStatus pc_fit(const struct PcSeries *series,
                int32_t variant,
                uintptr_t n_starts,
                uint64_t seed,
                struct PcFit **out);

double pc_fit_loglik(const struct PcFit *fit);

double pc_fit_aic(const struct PcFit *fit);

/**
 * Copies the fitted free parameters into a caller buffer; writes the
 * number of parameters through `n_out`.
 */
PcStatus pc_fit_params(const struct PcFit *fit, double *buf, uintptr_t cap, uintptr_t *n_out);

void pc_fit_free(struct PcFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRICECLUSTER_H */
