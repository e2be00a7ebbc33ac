//! Double Poisson distribution: a two-parameter count distribution with a
//! location parameter `mu` and a log-dispersion parameter `alpha`. At
//! `alpha = 0` it reduces to the ordinary Poisson distribution; `alpha > 0`
//! gives underdispersion, `alpha < 0` overdispersion.
//!
//! All pmf arithmetic is carried out in log-space; the naive density
//! overflows for locations in the thousands, which is exactly the regime
//! integer tick prices live in.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Location/dispersion pair of the double Poisson distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DPParams {
    pub mu: f64,
    pub alpha: f64,
}

impl DPParams {
    pub fn new(mu: f64, alpha: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mu must be positive and finite, got {mu}"
            )));
        }
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be finite, got {alpha}"
            )));
        }
        Ok(Self { mu, alpha })
    }

    /// Standard deviation implied by the moment approximation.
    pub fn sigma(&self) -> f64 {
        (self.mu * (-self.alpha).exp()).sqrt()
    }
}

/// How to evaluate the normalizing constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormConstMethod {
    /// Closed-form approximation; accurate for large `mu`.
    EfronApprox,
    /// Partial sum of the defining series up to `m`, accumulated in
    /// log-space. Serves as the verification oracle.
    TruncatedSum(u64),
}

impl Default for NormConstMethod {
    fn default() -> Self {
        NormConstMethod::EfronApprox
    }
}

/// Log of the unnormalized pmf term at `y`, i.e. the summand of the
/// normalizing-constant series. Conventions at y = 0: y ln y = 0 and
/// y^y / y! = 1.
pub fn log_weight(p: DPParams, y: u64) -> f64 {
    let ea = p.alpha.exp();
    if y == 0 {
        return p.alpha / 2.0 - ea * p.mu;
    }
    let yf = y as f64;
    yf * yf.ln() - ln_gamma(yf + 1.0) + ea * yf * (p.mu / yf).ln() + p.alpha / 2.0 + ea * yf
        - ea * p.mu
        - yf
}

/// Normalizing constant of the distribution.
pub fn norm_const(p: DPParams, method: NormConstMethod) -> Result<f64> {
    let c = match method {
        NormConstMethod::EfronApprox => {
            let eam = p.alpha.exp() * p.mu;
            1.0 + (1.0 - p.alpha.exp()) / (12.0 * eam) * (1.0 + 1.0 / eam)
        }
        NormConstMethod::TruncatedSum(m) => {
            if (m as f64) < 2.0 * p.mu {
                return Err(Error::InvalidParameter(format!(
                    "truncation m = {m} must be at least 2*mu = {}",
                    2.0 * p.mu
                )));
            }
            log_sum_weights(p, 0, m).exp()
        }
    };
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::Domain(format!(
            "normalizing constant not positive finite for mu={}, alpha={}: {c}",
            p.mu, p.alpha
        )));
    }
    Ok(c)
}

/// Streaming log-sum-exp of `log_weight` over `lo..=hi`.
fn log_sum_weights(p: DPParams, lo: u64, hi: u64) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for y in lo..=hi {
        max = max.max(log_weight(p, y));
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    for y in lo..=hi {
        acc += (log_weight(p, y) - max).exp();
    }
    max + acc.ln()
}

/// Log-pmf at `y`.
pub fn log_pmf(p: DPParams, y: u64, method: NormConstMethod) -> Result<f64> {
    Ok(log_weight(p, y) - norm_const(p, method)?.ln())
}

pub fn pmf(p: DPParams, y: u64, method: NormConstMethod) -> Result<f64> {
    Ok(log_pmf(p, y, method)?.exp())
}

/// Moment approximations: (E[Y], var[Y]) = (mu, mu e^{-alpha}).
pub fn mean_var(p: DPParams) -> (f64, f64) {
    (p.mu, p.mu * (-p.alpha).exp())
}

/// Score of the log-likelihood in (mu, alpha), treating the normalizing
/// constant as fixed.
pub fn score(p: DPParams, y: u64) -> (f64, f64) {
    let ea = p.alpha.exp();
    let yf = y as f64;
    let y_ln_y = if y == 0 { 0.0 } else { yf * yf.ln() };
    let s_mu = ea / p.mu * (yf - p.mu);
    let s_alpha = ea * (yf * p.mu.ln() - p.mu - y_ln_y + yf) + 0.5;
    (s_mu, s_alpha)
}

/// Fisher information approximation: diag(e^alpha / mu, 1/2).
pub fn fisher_info(p: DPParams) -> [[f64; 2]; 2] {
    [[p.alpha.exp() / p.mu, 0.0], [0.0, 0.5]]
}

/// Support window `[lo, hi]` capturing all but a negligible tail
/// (omitted mass below 1e-12). Starts at mu +/- 12 sigma and widens
/// until the boundary weights are vanishingly small relative to the mode.
pub fn support_window(p: DPParams) -> Result<(u64, u64)> {
    let sigma = p.sigma().max(0.25);
    let half = (12.0 * sigma).ceil() as i64 + 2;
    let center = p.mu.round() as i64;
    let mut lo = (center - half).max(0) as u64;
    let mut hi = (center + half) as u64;
    let peak = log_weight(p, center.max(0) as u64);
    let step = (4.0 * sigma).ceil() as u64 + 4;
    // widen while boundary terms could still carry tail mass
    let cutoff = peak + (1e-20f64).ln();
    let mut guard = 0;
    while lo > 0 && log_weight(p, lo) > cutoff {
        lo = lo.saturating_sub(step);
        guard += 1;
        if guard > 1000 {
            return Err(Error::Domain("support window failed to close on the left".into()));
        }
    }
    guard = 0;
    while log_weight(p, hi) > cutoff {
        hi += step;
        guard += 1;
        if guard > 1000 {
            return Err(Error::Domain("support window failed to close on the right".into()));
        }
    }
    Ok((lo, hi))
}

/// Cumulative table over the support window with exact renormalization,
/// ready for inversion sampling.
pub(crate) struct InversionTable {
    lo: u64,
    cdf: Vec<f64>,
}

impl InversionTable {
    pub(crate) fn build(p: DPParams) -> Result<Self> {
        let (lo, hi) = support_window(p)?;
        let log_z = log_sum_weights(p, lo, hi);
        if !log_z.is_finite() {
            return Err(Error::Domain("degenerate support window".into()));
        }
        let mut cdf = Vec::with_capacity((hi - lo + 1) as usize);
        let mut acc = 0.0;
        for y in lo..=hi {
            acc += (log_weight(p, y) - log_z).exp();
            cdf.push(acc);
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Ok(Self { lo, cdf })
    }

    pub(crate) fn draw<R: Rng>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c < u);
        self.lo + idx.min(self.cdf.len() - 1) as u64
    }
}

/// Draw `n` values by inversion of the exactly-renormalized truncated pmf.
/// Deterministic given the seed.
pub fn sample(p: DPParams, rng_seed: u64, n: usize) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_with(p, &mut rng, n)
}

pub fn sample_with<R: Rng>(p: DPParams, rng: &mut R, n: usize) -> Result<Vec<u64>> {
    let table = InversionTable::build(p)?;
    Ok((0..n).map(|_| table.draw(rng)).collect())
}
