//! C ABI for the price-clustering model. Handles are opaque pointers,
//! every fallible call returns a `PcStatus`, and outputs are written
//! through caller-provided pointers.

use std::os::raw::c_double;
use std::panic::{catch_unwind, AssertUnwindSafe};

use pricecluster::cluster_mixture::{mixture_log_lik, MixtureParams};
use pricecluster::double_poisson::{DPParams, NormConstMethod};
use pricecluster::dynamics::{simulate, ExogenousPolicy, StaticParams, TickSeries};
use pricecluster::estimation::{fit_mle, FitConfig, FitResult, ModelVariant};

/// Status codes returned by every fallible call.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DomainError = 3,
    EstimationFailed = 4,
    Panic = 5,
}

/// Opaque tick-series handle.
pub struct PcSeries(TickSeries);

/// Opaque fit-result handle.
pub struct PcFit(FitResult);

fn guard<F: FnOnce() -> PcStatus>(f: F) -> PcStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(PcStatus::Panic)
}

/// Log-pmf of the double Poisson distribution with the analytic
/// normalization constant.
#[no_mangle]
pub extern "C" fn pc_dp_log_pmf(
    mu: c_double,
    alpha: c_double,
    y: u64,
    out: *mut c_double,
) -> PcStatus {
    if out.is_null() {
        return PcStatus::NullPointer;
    }
    guard(|| {
        let p = match DPParams::new(mu, alpha) {
            Ok(p) => p,
            Err(_) => return PcStatus::InvalidArgument,
        };
        match pricecluster::double_poisson::log_pmf(p, y, NormConstMethod::EfronApprox) {
            Ok(v) => {
                unsafe { *out = v };
                PcStatus::Ok
            }
            Err(_) => PcStatus::DomainError,
        }
    })
}

/// Log-likelihood of one observation under the nickel-and-dime mixture.
#[no_mangle]
pub extern "C" fn pc_mixture_log_lik(
    mu: c_double,
    alpha: c_double,
    phi1: c_double,
    phi5: c_double,
    phi10: c_double,
    y: u64,
    out: *mut c_double,
) -> PcStatus {
    if out.is_null() {
        return PcStatus::NullPointer;
    }
    guard(|| {
        let dp = match DPParams::new(mu, alpha) {
            Ok(p) => p,
            Err(_) => return PcStatus::InvalidArgument,
        };
        let mix = match MixtureParams::nickel_dime(dp, phi1, phi5, phi10) {
            Ok(m) => m,
            Err(_) => return PcStatus::InvalidArgument,
        };
        match mixture_log_lik(&mix, y, NormConstMethod::EfronApprox) {
            Ok(v) => {
                unsafe { *out = v };
                PcStatus::Ok
            }
            Err(_) => PcStatus::DomainError,
        }
    })
}

/// Builds a single-day tick series from parallel arrays of prices (in
/// ticks), durations, and volumes. The returned handle must be released
/// with `pc_series_free`.
#[no_mangle]
pub unsafe extern "C" fn pc_series_new(
    y: *const u64,
    z: *const c_double,
    v: *const c_double,
    n: usize,
    out: *mut *mut PcSeries,
) -> PcStatus {
    if y.is_null() || z.is_null() || v.is_null() || out.is_null() {
        return PcStatus::NullPointer;
    }
    guard(|| {
        let y = unsafe { std::slice::from_raw_parts(y, n) }.to_vec();
        let z = unsafe { std::slice::from_raw_parts(z, n) }.to_vec();
        let v = unsafe { std::slice::from_raw_parts(v, n) }.to_vec();
        let mut t = 0.0;
        let timestamps: Vec<f64> = z
            .iter()
            .map(|dz| {
                t += dz;
                t
            })
            .collect();
        match TickSeries::new(timestamps, y, z, v) {
            Ok(ts) => {
                unsafe { *out = Box::into_raw(Box::new(PcSeries(ts))) };
                PcStatus::Ok
            }
            Err(_) => PcStatus::InvalidArgument,
        }
    })
}

/// Simulates a series from the dynamic model. Parameter layout:
/// c, b, a, d, f, g1, g2, g3, g4, h5, h10.
#[no_mangle]
pub unsafe extern "C" fn pc_simulate(
    params: *const c_double,
    y0: u64,
    seed: u64,
    n: usize,
    out: *mut *mut PcSeries,
) -> PcStatus {
    if params.is_null() || out.is_null() {
        return PcStatus::NullPointer;
    }
    guard(|| {
        let p = unsafe { std::slice::from_raw_parts(params, 11) };
        let theta = StaticParams {
            c: p[0],
            b: p[1],
            a: p[2],
            d: p[3],
            f: p[4],
            g1: p[5],
            g2: p[6],
            g3: p[7],
            g4: p[8],
            h5: p[9],
            h10: p[10],
        };
        if theta.validate().is_err() {
            return PcStatus::InvalidArgument;
        }
        match simulate(&theta, &ExogenousPolicy::default(), y0, seed, n) {
            Ok(ts) => {
                unsafe { *out = Box::into_raw(Box::new(PcSeries(ts))) };
                PcStatus::Ok
            }
            Err(_) => PcStatus::DomainError,
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn pc_series_len(series: *const PcSeries) -> usize {
    if series.is_null() {
        return 0;
    }
    unsafe { (*series).0.y.len() }
}

/// Copies prices (in ticks) into a caller buffer of length `n`.
#[no_mangle]
pub unsafe extern "C" fn pc_series_prices(
    series: *const PcSeries,
    buf: *mut u64,
    n: usize,
) -> PcStatus {
    if series.is_null() || buf.is_null() {
        return PcStatus::NullPointer;
    }
    let y = unsafe { &(*series).0.y };
    if n < y.len() {
        return PcStatus::InvalidArgument;
    }
    unsafe { std::ptr::copy_nonoverlapping(y.as_ptr(), buf, y.len()) };
    PcStatus::Ok
}

#[no_mangle]
pub unsafe extern "C" fn pc_series_free(series: *mut PcSeries) {
    if !series.is_null() {
        drop(unsafe { Box::from_raw(series) });
    }
}

/// Fits the model by conditional maximum likelihood. `variant` selects
/// the restriction: 0 no clustering, 1 static clustering, 2 dynamic
/// clustering. The returned handle must be released with `pc_fit_free`.
#[no_mangle]
pub unsafe extern "C" fn pc_fit(
    series: *const PcSeries,
    variant: i32,
    n_starts: usize,
    seed: u64,
    out: *mut *mut PcFit,
) -> PcStatus {
    if series.is_null() || out.is_null() {
        return PcStatus::NullPointer;
    }
    guard(|| {
        let variant = match variant {
            0 => ModelVariant::NoClustering,
            1 => ModelVariant::StaticClustering,
            2 => ModelVariant::DynamicClustering,
            _ => return PcStatus::InvalidArgument,
        };
        let cfg = FitConfig {
            n_starts: n_starts.max(1),
            seed,
            ..FitConfig::default()
        };
        match fit_mle(unsafe { &(*series).0 }, variant, &cfg) {
            Ok(fr) => {
                unsafe { *out = Box::into_raw(Box::new(PcFit(fr))) };
                PcStatus::Ok
            }
            Err(_) => PcStatus::EstimationFailed,
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn pc_fit_loglik(fit: *const PcFit) -> c_double {
    if fit.is_null() {
        return f64::NAN;
    }
    unsafe { (*fit).0.loglik_total }
}

#[no_mangle]
pub unsafe extern "C" fn pc_fit_aic(fit: *const PcFit) -> c_double {
    if fit.is_null() {
        return f64::NAN;
    }
    unsafe { (*fit).0.aic }
}

/// Copies the fitted free parameters into a caller buffer; writes the
/// number of parameters through `n_out`.
#[no_mangle]
pub unsafe extern "C" fn pc_fit_params(
    fit: *const PcFit,
    buf: *mut c_double,
    cap: usize,
    n_out: *mut usize,
) -> PcStatus {
    if fit.is_null() || buf.is_null() || n_out.is_null() {
        return PcStatus::NullPointer;
    }
    let theta = unsafe { &(*fit).0.theta_hat };
    let vals = theta.as_vec();
    if cap < vals.len() {
        return PcStatus::InvalidArgument;
    }
    unsafe {
        std::ptr::copy_nonoverlapping(vals.as_ptr(), buf, vals.len());
        *n_out = vals.len();
    }
    PcStatus::Ok
}

#[no_mangle]
pub unsafe extern "C" fn pc_fit_free(fit: *mut PcFit) {
    if !fit.is_null() {
        drop(unsafe { Box::from_raw(fit) });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dp_log_pmf_round_trip() {
        let mut out = f64::NAN;
        let st = pc_dp_log_pmf(10.0, 0.0, 10, &mut out);
        assert_eq!(st, PcStatus::Ok);
        let direct = pricecluster::double_poisson::log_pmf(
            DPParams::new(10.0, 0.0).unwrap(),
            10,
            NormConstMethod::EfronApprox,
        )
        .unwrap();
        assert!((out - direct).abs() < 1e-14);
    }

    #[test]
    fn null_pointers_are_rejected() {
        assert_eq!(pc_dp_log_pmf(10.0, 0.0, 10, std::ptr::null_mut()), PcStatus::NullPointer);
        unsafe {
            assert_eq!(
                pc_fit(std::ptr::null(), 0, 1, 1, std::ptr::null_mut()),
                PcStatus::NullPointer
            );
        }
    }

    #[test]
    fn simulate_and_read_back() {
        let params = [5.0, 0.09, 0.30, -0.29, 0.39, -0.14, 0.18, 0.03, -0.71, 0.01, 0.03];
        let mut handle: *mut PcSeries = std::ptr::null_mut();
        let st = unsafe { pc_simulate(params.as_ptr(), 17606, 7, 500, &mut handle) };
        assert_eq!(st, PcStatus::Ok);
        let n = unsafe { pc_series_len(handle) };
        assert_eq!(n, 500);
        let mut buf = vec![0u64; n];
        let st = unsafe { pc_series_prices(handle, buf.as_mut_ptr(), n) };
        assert_eq!(st, PcStatus::Ok);
        assert!(buf.iter().all(|&y| y > 0));
        unsafe { pc_series_free(handle) };
    }

    #[test]
    fn invalid_variant_is_rejected() {
        let params = [5.0, 0.09, 0.30, -0.29, 0.39, -0.14, 0.18, 0.03, -0.71, 0.01, 0.03];
        let mut handle: *mut PcSeries = std::ptr::null_mut();
        unsafe { pc_simulate(params.as_ptr(), 17606, 7, 300, &mut handle) };
        let mut fit: *mut PcFit = std::ptr::null_mut();
        let st = unsafe { pc_fit(handle, 9, 1, 1, &mut fit) };
        assert_eq!(st, PcStatus::InvalidArgument);
        unsafe { pc_series_free(handle) };
    }
}
