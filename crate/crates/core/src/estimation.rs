//! Conditional maximum-likelihood estimation of the static parameter
//! vector over the three nested model variants, with multi-start
//! derivative-free optimization and AIC comparison.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, FilterInput, FilterPath, StaticParams, TickSeries};
use crate::error::{Error, Result};
use crate::optim;

/// The three nested specifications of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelVariant {
    /// f = g1..g4 = h5 = h10 = 0; free: c, b, a, d.
    NoClustering,
    /// f = g1..g4 = 0; free: c, b, a, d, h5, h10.
    StaticClustering,
    /// All 11 parameters free.
    DynamicClustering,
}

impl ModelVariant {
    pub fn n_free(&self) -> usize {
        match self {
            ModelVariant::NoClustering => 4,
            ModelVariant::StaticClustering => 6,
            ModelVariant::DynamicClustering => 11,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelVariant::NoClustering => "none",
            ModelVariant::StaticClustering => "static",
            ModelVariant::DynamicClustering => "dynamic",
        }
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "no-clustering" => Ok(ModelVariant::NoClustering),
            "static" => Ok(ModelVariant::StaticClustering),
            "dynamic" => Ok(ModelVariant::DynamicClustering),
            other => Err(Error::InvalidParameter(format!("unknown variant '{other}'"))),
        }
    }
}

/// Which local optimizer drives each start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Optimizer {
    PrincipalAxis,
    NelderMead,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_starts: usize,
    pub max_evals_per_start: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_starts: 5,
            max_evals_per_start: 10_000,
            rel_tol: 1e-8,
            seed: 20200102,
            optimizer: Optimizer::PrincipalAxis,
        }
    }
}

/// Objective trace of a single optimization start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartTrace {
    pub start: usize,
    pub objective: f64,
    pub evals: usize,
    pub converged: bool,
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub variant: ModelVariant,
    pub theta_hat: StaticParams,
    pub loglik_total: f64,
    pub loglik_avg: f64,
    pub aic: f64,
    pub n_obs: usize,
    pub path: FilterPath,
    pub starts: Vec<StartTrace>,
    pub converged: bool,
}

/// JSON-facing view of a fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub variant: String,
    pub theta_hat: StaticParams,
    pub loglik_total: f64,
    pub loglik_avg: f64,
    pub aic: f64,
    pub n_obs: usize,
    pub starts: Vec<StartTrace>,
    pub converged: bool,
}

impl FitResult {
    pub fn report(&self) -> FitReport {
        FitReport {
            variant: self.variant.name().to_string(),
            theta_hat: self.theta_hat,
            loglik_total: self.loglik_total,
            loglik_avg: self.loglik_avg,
            aic: self.aic,
            n_obs: self.n_obs,
            starts: self.starts.clone(),
            converged: self.converged,
        }
    }
}

/// Averages of the time-varying parameters over the filtered path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    /// Mean location in dollars.
    pub mu_bar: f64,
    pub alpha_bar: f64,
    /// Mean trader portions, in percent.
    pub phi1_bar_pct: f64,
    pub phi5_bar_pct: f64,
    pub phi10_bar_pct: f64,
}

/// Unconstrained-to-constrained packing of the free parameters.
/// b and f pass through tanh to stay in (-1, 1); h5 and h10 through exp.
fn unpack(variant: ModelVariant, raw: &[f64]) -> StaticParams {
    let mut th = StaticParams {
        c: raw[0],
        b: raw[1].tanh(),
        a: raw[2],
        d: raw[3],
        f: 0.0,
        g1: 0.0,
        g2: 0.0,
        g3: 0.0,
        g4: 0.0,
        h5: 0.0,
        h10: 0.0,
    };
    match variant {
        ModelVariant::NoClustering => {}
        ModelVariant::StaticClustering => {
            th.h5 = raw[4].exp();
            th.h10 = raw[5].exp();
        }
        ModelVariant::DynamicClustering => {
            th.f = raw[4].tanh();
            th.g1 = raw[5];
            th.g2 = raw[6];
            th.g3 = raw[7];
            th.g4 = raw[8];
            th.h5 = raw[9].exp();
            th.h10 = raw[10].exp();
        }
    }
    th
}

fn atanh(x: f64) -> f64 {
    0.5 * ((1.0 + x) / (1.0 - x)).ln()
}

/// Moments-based neutral starting point in raw coordinates.
fn neutral_start(variant: ModelVariant, ts: &TickSeries) -> Vec<f64> {
    let n = ts.len();
    let mean_y = ts.y.iter().map(|&y| y as f64).sum::<f64>() / n as f64;
    let mut var_d = 0.0;
    let mut count: f64 = 0.0;
    for w in ts.y.windows(2) {
        let d = w[1] as f64 - w[0] as f64;
        var_d += d * d;
        count += 1.0;
    }
    let var_d = (var_d / count.max(1.0)).max(1e-6);
    // instantaneous variance mu e^{-alpha} ~ var of one-step differences
    let alpha0 = (mean_y / var_d).ln();
    let b0 = 0.2;
    let c0 = alpha0 * (1.0 - b0);
    match variant {
        ModelVariant::NoClustering => vec![c0, atanh(b0), 0.1, 0.0],
        ModelVariant::StaticClustering => {
            vec![c0, atanh(b0), 0.1, 0.0, (0.01f64).ln(), (0.01f64).ln()]
        }
        ModelVariant::DynamicClustering => vec![
            c0,
            atanh(b0),
            0.1,
            0.0,
            atanh(0.2),
            0.0,
            0.0,
            0.0,
            0.0,
            (0.01f64).ln(),
            (0.01f64).ln(),
        ],
    }
}

fn start_scales(variant: ModelVariant) -> Vec<f64> {
    match variant {
        ModelVariant::NoClustering => vec![1.0, 0.3, 0.15, 0.3],
        ModelVariant::StaticClustering => vec![1.0, 0.3, 0.15, 0.3, 1.5, 1.5],
        ModelVariant::DynamicClustering => {
            vec![1.0, 0.3, 0.15, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 1.5, 1.5]
        }
    }
}

/// Divide durations and volumes by their sample means; raw values are
/// retained alongside. Idempotent.
pub fn standardize_exogenous(ts: &TickSeries) -> Result<TickSeries> {
    TickSeries::with_days(
        ts.timestamps.clone(),
        ts.y.clone(),
        ts.z_std.clone(),
        ts.v_std.clone(),
        ts.day_starts.clone(),
    )
}

/// Maximize the conditional likelihood from several starting points and
/// keep the best. Probes where the filter diverges score a large finite
/// penalty rather than aborting the search.
pub fn fit_mle(ts: &TickSeries, variant: ModelVariant, config: &FitConfig) -> Result<FitResult> {
    if ts.len() < 100 {
        return Err(Error::Estimation(format!(
            "need at least 100 observations, got {}",
            ts.len()
        )));
    }
    if config.n_starts == 0 {
        return Err(Error::Estimation("n_starts must be >= 1".into()));
    }
    let ts = standardize_exogenous(ts)?;
    let input = FilterInput::build(&ts);
    let n_contrib = input.n_contrib();

    let neutral = neutral_start(variant, &ts);
    let scales = start_scales(variant);
    let dim = neutral.len();

    // start set: the neutral point plus seeded uniform perturbations
    let mut starts: Vec<Vec<f64>> = vec![neutral.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 1..config.n_starts {
        let pt: Vec<f64> = (0..dim)
            .map(|i| neutral[i] + scales[i] * rng.gen_range(-1.0..1.0))
            .collect();
        starts.push(pt);
    }

    let objective = |raw: &[f64]| -> f64 {
        let theta = unpack(variant, raw);
        match dynamics::loglik(&theta, &input) {
            Ok((total, n)) => -total / n as f64,
            Err(_) => 1e10,
        }
    };

    let runs: Vec<(usize, optim::OptimResult)> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let mut f = |raw: &[f64]| objective(raw);
            let steps: Vec<f64> = scales.iter().map(|s| 0.3 * s).collect();
            let r = match config.optimizer {
                Optimizer::PrincipalAxis => optim::principal_axis(
                    &mut f,
                    x0,
                    &steps,
                    config.rel_tol,
                    config.max_evals_per_start,
                ),
                Optimizer::NelderMead => optim::nelder_mead(
                    &mut f,
                    x0,
                    &steps,
                    config.rel_tol,
                    config.max_evals_per_start,
                ),
            };
            (i, r)
        })
        .collect();

    let traces: Vec<StartTrace> = runs
        .iter()
        .map(|(i, r)| StartTrace {
            start: *i,
            objective: r.fmin,
            evals: r.evals,
            converged: r.converged,
            failed: r.fmin >= 1e9,
        })
        .collect();

    let best = runs
        .iter()
        .filter(|(_, r)| r.fmin < 1e9)
        .min_by(|a, b| {
            a.1.fmin
                .partial_cmp(&b.1.fmin)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        })
        .ok_or_else(|| {
            Error::Estimation(format!(
                "all {} starts diverged; traces: {:?}",
                config.n_starts, traces
            ))
        })?;

    let theta_hat = unpack(variant, &best.1.x);
    let path = dynamics::filter_series(&theta_hat, &ts)?;
    let loglik_total = path.loglik_total;
    let loglik_avg = loglik_total / n_contrib as f64;
    let aic = 2.0 * variant.n_free() as f64 - 2.0 * loglik_total;
    let converged = best.1.converged;

    Ok(FitResult {
        variant,
        theta_hat,
        loglik_total,
        loglik_avg,
        aic,
        n_obs: n_contrib,
        path,
        starts: traces,
        converged,
    })
}

/// Path averages of the time-varying parameters.
pub fn summarize_fit(fr: &FitResult, tick_scale: u64) -> SummaryRow {
    let vals = |xs: &[f64]| {
        let (mut sum, mut n) = (0.0, 0usize);
        for &x in xs {
            if x.is_finite() {
                sum += x;
                n += 1;
            }
        }
        sum / n as f64
    };
    SummaryRow {
        mu_bar: vals(&fr.path.mu) / tick_scale as f64,
        alpha_bar: vals(&fr.path.alpha),
        phi1_bar_pct: 100.0 * vals(&fr.path.phi1),
        phi5_bar_pct: 100.0 * vals(&fr.path.phi5),
        phi10_bar_pct: 100.0 * vals(&fr.path.phi10),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, ExogenousPolicy};
    use approx::assert_relative_eq;

    #[test]
    fn standardize_unit_mean_and_idempotent() {
        let ts = TickSeries::new(
            vec![1.0, 2.0, 3.0],
            vec![100, 101, 100],
            vec![1.0, 2.0, 3.0],
            vec![4.0, 4.0, 4.0],
        )
        .unwrap();
        let s = standardize_exogenous(&ts).unwrap();
        assert_eq!(s.z, vec![0.5, 1.0, 1.5]);
        let mean: f64 = s.z.iter().sum::<f64>() / 3.0;
        assert_relative_eq!(mean, 1.0, epsilon = 1e-12);
        let s2 = standardize_exogenous(&s).unwrap();
        assert_eq!(s2.z, s.z);
        assert_eq!(s2.v, s.v);
    }

    #[test]
    fn unpack_respects_variant_restrictions() {
        let raw = vec![5.0, 0.1, 0.2, -0.1];
        let th = unpack(ModelVariant::NoClustering, &raw);
        assert_eq!(th.f, 0.0);
        assert_eq!(th.h5, 0.0);
        assert_eq!(th.h10, 0.0);
        assert_relative_eq!(th.b, 0.1f64.tanh());

        let raw = vec![5.0, 0.1, 0.2, -0.1, -3.0, -2.0];
        let th = unpack(ModelVariant::StaticClustering, &raw);
        assert_eq!(th.g1, 0.0);
        assert_relative_eq!(th.h5, (-3.0f64).exp());
    }

    #[test]
    fn aic_recomputes_from_loglik() {
        let theta = StaticParams {
            c: 5.0, b: 0.1, a: 0.2, d: -0.2, f: 0.0,
            g1: 0.0, g2: 0.0, g3: 0.0, g4: 0.0, h5: 0.02, h10: 0.03,
        };
        let ts = simulate(&theta, &ExogenousPolicy::default(), 10000, 5, 3000).unwrap();
        let cfg = FitConfig { n_starts: 2, max_evals_per_start: 800, ..Default::default() };
        let fr = fit_mle(&ts, ModelVariant::StaticClustering, &cfg).unwrap();
        assert_relative_eq!(fr.aic, 2.0 * 6.0 - 2.0 * fr.loglik_total, epsilon = 1e-9);
        assert_relative_eq!(fr.loglik_avg, fr.loglik_total / fr.n_obs as f64, epsilon = 1e-12);
    }

    #[test]
    fn determinism_of_fit() {
        let theta = StaticParams {
            c: 5.0, b: 0.1, a: 0.2, d: -0.2, f: 0.0,
            g1: 0.0, g2: 0.0, g3: 0.0, g4: 0.0, h5: 0.0, h10: 0.0,
        };
        let ts = simulate(&theta, &ExogenousPolicy::default(), 10000, 6, 2000).unwrap();
        let cfg = FitConfig { n_starts: 2, max_evals_per_start: 500, ..Default::default() };
        let a = fit_mle(&ts, ModelVariant::NoClustering, &cfg).unwrap();
        let b = fit_mle(&ts, ModelVariant::NoClustering, &cfg).unwrap();
        assert_eq!(a.theta_hat, b.theta_hat);
        assert_eq!(a.loglik_total, b.loglik_total);
    }

    #[test]
    fn volume_scale_invariance() {
        let theta = StaticParams {
            c: 5.0, b: 0.1, a: 0.2, d: -0.2, f: 0.3,
            g1: 0.1, g2: 0.2, g3: 0.0, g4: -0.5, h5: 0.02, h10: 0.03,
        };
        let ts = simulate(&theta, &ExogenousPolicy::default(), 10000, 7, 2000).unwrap();
        let scaled = TickSeries::new(
            ts.timestamps.clone(),
            ts.y.clone(),
            ts.z.clone(),
            ts.v.iter().map(|v| v * 1000.0).collect(),
        )
        .unwrap();
        let cfg = FitConfig { n_starts: 2, max_evals_per_start: 600, ..Default::default() };
        let a = fit_mle(&ts, ModelVariant::NoClustering, &cfg).unwrap();
        let b = fit_mle(&scaled, ModelVariant::NoClustering, &cfg).unwrap();
        assert_relative_eq!(a.loglik_total, b.loglik_total, epsilon = 1e-6);
    }

    #[test]
    fn summarize_constant_phi_path() {
        let theta = StaticParams {
            c: 5.0, b: 0.1, a: 0.2, d: -0.2, f: 0.0,
            g1: 0.0, g2: 0.0, g3: 0.0, g4: 0.0, h5: 0.02, h10: 0.03,
        };
        let ts = simulate(&theta, &ExogenousPolicy::default(), 10000, 9, 500).unwrap();
        let path = dynamics::filter_series(&theta, &ts).unwrap();
        let fr = FitResult {
            variant: ModelVariant::StaticClustering,
            theta_hat: theta,
            loglik_total: path.loglik_total,
            loglik_avg: path.loglik_avg(),
            aic: 0.0,
            n_obs: path.n_contrib,
            path,
            starts: vec![],
            converged: true,
        };
        let row = summarize_fit(&fr, 100);
        let denom = 1.0 + 0.02 + 0.03; // eta = 0 under the restriction
        assert_relative_eq!(row.phi1_bar_pct, 100.0 / denom, epsilon = 1e-9);
        assert_relative_eq!(row.phi5_bar_pct, 2.0 / denom, epsilon = 1e-9);
        assert_relative_eq!(row.phi10_bar_pct, 3.0 / denom, epsilon = 1e-9);
    }
}
