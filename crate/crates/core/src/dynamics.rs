//! Observation-driven dynamics: the score-driven filter for the
//! time-varying parameters (mu_t, alpha_t, eta_t, phi_t), likelihood
//! accumulation over a tick series, and the forward simulator.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::cluster_mixture::{derive_trader_params, MixtureParams};
use crate::double_poisson::{DPParams, InversionTable};
use crate::error::{Error, Result};

/// Alpha values outside this band flag a diverging filter; the value is
/// clamped so the objective stays finite while the pathology stays visible.
pub const ALPHA_CLAMP: f64 = 50.0;

/// Static parameter vector of the dynamic model:
/// volatility recursion (c, b, a, d), portion recursion (f, g1..g4) and
/// type strengths (h5, h10).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticParams {
    pub c: f64,
    pub b: f64,
    pub a: f64,
    pub d: f64,
    pub f: f64,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub g4: f64,
    pub h5: f64,
    pub h10: f64,
}

impl StaticParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.c, self.b, self.a, self.d, self.f, self.g1, self.g2, self.g3, self.g4, self.h5,
            self.h10,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite static parameter".into()));
        }
        if self.h5 < 0.0 || self.h10 < 0.0 {
            return Err(Error::InvalidParameter("h5 and h10 must be nonnegative".into()));
        }
        Ok(())
    }

    /// |b| < 1 and |f| < 1; required for the stationary initialization.
    pub fn is_stable(&self) -> bool {
        self.b.abs() < 1.0 && self.f.abs() < 1.0
    }

    pub fn as_vec(&self) -> Vec<f64> {
        vec![
            self.c, self.b, self.a, self.d, self.f, self.g1, self.g2, self.g3, self.g4, self.h5,
            self.h10,
        ]
    }

    pub fn names() -> [&'static str; 11] {
        ["c", "b", "a", "d", "f", "g1", "g2", "g3", "g4", "h5", "h10"]
    }
}

/// Aligned tick-level series: integer prices, preceding durations and
/// volumes. Durations and volumes are kept both raw and standardized to
/// unit mean. `day_starts` marks the first index of each trading day;
/// every day restarts the filter's conditioning burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct TickSeries {
    pub timestamps: Vec<f64>,
    pub y: Vec<u64>,
    pub z: Vec<f64>,
    pub v: Vec<f64>,
    pub z_std: Vec<f64>,
    pub v_std: Vec<f64>,
    pub day_starts: Vec<usize>,
}

impl TickSeries {
    pub fn new(timestamps: Vec<f64>, y: Vec<u64>, z: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        Self::with_days(timestamps, y, z, v, vec![0])
    }

    pub fn with_days(
        timestamps: Vec<f64>,
        y: Vec<u64>,
        z: Vec<f64>,
        v: Vec<f64>,
        day_starts: Vec<usize>,
    ) -> Result<Self> {
        let n = y.len();
        if timestamps.len() != n || z.len() != n || v.len() != n {
            return Err(Error::InvalidParameter("series arrays must have equal length".into()));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("series must be nonempty".into()));
        }
        if y.iter().any(|&p| p == 0) {
            return Err(Error::InvalidParameter("prices must be >= 1 tick".into()));
        }
        if z.iter().any(|&x| !(x > 0.0)) || v.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidParameter("durations and volumes must be positive".into()));
        }
        if day_starts.first() != Some(&0) || day_starts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("day_starts must begin at 0 and increase".into()));
        }
        let z_mean = z.iter().sum::<f64>() / n as f64;
        let v_mean = v.iter().sum::<f64>() / n as f64;
        let z_std = z.iter().map(|x| x / z_mean).collect();
        let v_std = v.iter().map(|x| x / v_mean).collect();
        Ok(Self { timestamps, y, z, v, z_std, v_std, day_starts })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Day segments as index ranges.
    pub fn segments(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.day_starts.len());
        for (i, &s) in self.day_starts.iter().enumerate() {
            let e = self.day_starts.get(i + 1).copied().unwrap_or(self.len());
            out.push(s..e);
        }
        out
    }
}

/// Filter state at one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    pub mu: f64,
    pub alpha: f64,
    pub eta: f64,
    pub phi: [f64; 3],
    pub clamped: bool,
}

/// Full path of time-varying parameters with per-tick likelihood
/// contributions. The first two ticks of each day are conditioning
/// burn-in and carry NaN contributions.
#[derive(Debug, Clone)]
pub struct FilterPath {
    pub mu: Vec<f64>,
    pub alpha: Vec<f64>,
    pub eta: Vec<f64>,
    pub phi1: Vec<f64>,
    pub phi5: Vec<f64>,
    pub phi10: Vec<f64>,
    pub loglik_contrib: Vec<f64>,
    pub loglik_total: f64,
    pub n_contrib: usize,
    pub clamp_count: usize,
}

impl FilterPath {
    pub fn loglik_avg(&self) -> f64 {
        self.loglik_total / self.n_contrib as f64
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "mu", "alpha", "eta", "phi1", "phi5", "phi10", "loglik"])?;
        for t in 0..self.mu.len() {
            wtr.write_record(&[
                t.to_string(),
                self.mu[t].to_string(),
                self.alpha[t].to_string(),
                self.eta[t].to_string(),
                self.phi1[t].to_string(),
                self.phi5[t].to_string(),
                self.phi10[t].to_string(),
                self.loglik_contrib[t].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Portions of Eq-(16) form: softmax over the logits
/// (eta, ln h5, ln h10) with max-subtraction; h = 0 maps to an excluded
/// component.
pub fn portions(eta: f64, h5: f64, h10: f64) -> [f64; 3] {
    let logits = [eta, h5.ln(), h10.ln()];
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|l| if l == f64::NEG_INFINITY { 0.0 } else { (l - max).exp() });
    let total: f64 = exps.iter().sum();
    exps.map(|e| e / total)
}

/// One step of the recursions: mu from the last price, alpha from the
/// score-driven volatility recursion, eta from the portion driver, and
/// phi by standardization.
pub fn filter_step(
    theta: &StaticParams,
    prev: &FilterState,
    y_prev: u64,
    y_prev2: u64,
    z_t: f64,
    v_t: f64,
) -> Result<FilterState> {
    let yp = y_prev as f64;
    let yp2 = y_prev2 as f64;
    let score_alpha = prev.alpha.exp() * (yp * (yp2 / yp).ln() - yp2 + yp) + 0.5;
    let mut alpha = theta.c + theta.b * prev.alpha + theta.a * score_alpha + theta.d * z_t.ln();
    if !alpha.is_finite() {
        return Err(Error::FilterDiverged { index: 0, reason: format!("alpha = {alpha}") });
    }
    let mut clamped = false;
    if alpha.abs() > ALPHA_CLAMP {
        alpha = alpha.clamp(-ALPHA_CLAMP, ALPHA_CLAMP);
        clamped = true;
    }
    let mu = yp;
    let ln_mu = mu.ln();
    let eta = theta.f * prev.eta
        + theta.g1 * ln_mu
        + theta.g2 * (ln_mu - alpha)
        + theta.g3 * z_t.ln()
        + theta.g4 * v_t.ln();
    if !eta.is_finite() {
        return Err(Error::FilterDiverged { index: 0, reason: format!("eta = {eta}") });
    }
    Ok(FilterState { mu, alpha, eta, phi: portions(eta, theta.h5, theta.h10), clamped })
}

fn initial_state(theta: &StaticParams, y0: u64, ln_z_mean: f64, ln_v_mean: f64) -> FilterState {
    let alpha = if theta.b.abs() < 1.0 { theta.c / (1.0 - theta.b) } else { theta.c };
    let ln_y0 = (y0 as f64).ln();
    let drive = theta.g1 * ln_y0 + theta.g2 * (ln_y0 - alpha) + theta.g3 * ln_z_mean
        + theta.g4 * ln_v_mean;
    let eta = if theta.f.abs() < 1.0 { drive / (1.0 - theta.f) } else { drive };
    FilterState {
        mu: y0 as f64,
        alpha: alpha.clamp(-ALPHA_CLAMP, ALPHA_CLAMP),
        eta,
        phi: portions(eta, theta.h5, theta.h10),
        clamped: false,
    }
}

/// Precomputed per-tick quantities that do not depend on theta. Built
/// once per series so repeated likelihood evaluations inside the
/// optimizer stay cheap.
pub struct FilterInput {
    n: usize,
    ln_z: Vec<f64>,
    ln_v: Vec<f64>,
    /// y_{t-1} ln(y_{t-2}/y_{t-1}) - y_{t-2} + y_{t-1}; NaN on burn-in ticks
    score_base: Vec<f64>,
    /// y_t ln(y_{t-1}/y_t) + y_t - y_{t-1}
    kernel_base: Vec<f64>,
    /// per tick, per multiple: 0.5 ln k + q ln q - ln q! - q when k | y_t
    mix_terms: Vec<[f64; 3]>,
    ln_mu: Vec<f64>,
    mu: Vec<f64>,
    y: Vec<u64>,
    segments: Vec<std::ops::Range<usize>>,
}

const MULTIPLES: [u64; 3] = [1, 5, 10];

impl FilterInput {
    pub fn build(ts: &TickSeries) -> Self {
        use statrs::function::gamma::ln_gamma;
        let n = ts.len();
        let ln_z: Vec<f64> = ts.z_std.iter().map(|z| z.ln()).collect();
        let ln_v: Vec<f64> = ts.v_std.iter().map(|v| v.ln()).collect();
        let mut score_base = vec![f64::NAN; n];
        let mut kernel_base = vec![f64::NAN; n];
        let mut ln_mu = vec![f64::NAN; n];
        let mut mu = vec![f64::NAN; n];
        let mut mix_terms = vec![[f64::NAN; 3]; n];
        let segments = ts.segments();
        for seg in &segments {
            for t in seg.clone() {
                if t >= seg.start + 1 {
                    let yp = ts.y[t - 1] as f64;
                    mu[t] = yp;
                    ln_mu[t] = yp.ln();
                    let yt = ts.y[t] as f64;
                    kernel_base[t] = yt * (yp / yt).ln() + yt - yp;
                    for (j, &k) in MULTIPLES.iter().enumerate() {
                        if ts.y[t] % k == 0 {
                            let q = (ts.y[t] / k) as f64;
                            mix_terms[t][j] =
                                0.5 * (k as f64).ln() + q * q.ln() - ln_gamma(q + 1.0) - q;
                        }
                    }
                }
                if t >= seg.start + 2 {
                    let yp = ts.y[t - 1] as f64;
                    let yp2 = ts.y[t - 2] as f64;
                    score_base[t] = yp * (yp2 / yp).ln() - yp2 + yp;
                }
            }
        }
        Self {
            n,
            ln_z,
            ln_v,
            score_base,
            kernel_base,
            mix_terms,
            ln_mu,
            mu,
            y: ts.y.clone(),
            segments,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn n_contrib(&self) -> usize {
        self.segments.iter().map(|s| s.len().saturating_sub(2)).sum()
    }
}

/// Mixture log-likelihood evaluated from the precomputed terms; matches
/// `cluster_mixture::mixture_log_lik` with the Efron constant.
#[inline]
fn tick_loglik(
    input: &FilterInput,
    t: usize,
    alpha: f64,
    eta: f64,
    ln_h5: f64,
    ln_h10: f64,
) -> f64 {
    let ea = alpha.exp();
    let mu = input.mu[t];
    let eam = ea * mu;
    let common = ea * input.kernel_base[t] + 0.5 * alpha;
    // log weights of the trader-type logits
    let logits = [eta, ln_h5, ln_h10];
    let lmax = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let norm = logits.iter().map(|l| (l - lmax).exp()).sum::<f64>().ln() + lmax;

    let mut tmax = f64::NEG_INFINITY;
    let mut terms = [f64::NEG_INFINITY; 3];
    for (j, &k) in MULTIPLES.iter().enumerate() {
        let w = input.mix_terms[t][j];
        if w.is_nan() || logits[j] == f64::NEG_INFINITY {
            continue;
        }
        // Efron constant of the k-component at (mu/k, alpha + ln k)
        let c_k = 1.0 + (1.0 - k as f64 * ea) / (12.0 * eam) * (1.0 + 1.0 / eam);
        if !(c_k > 0.0) {
            return f64::NAN;
        }
        let term = logits[j] - norm + w - c_k.ln();
        terms[j] = term;
        tmax = tmax.max(term);
    }
    if tmax == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let lse = tmax + terms.iter().map(|x| (x - tmax).exp()).sum::<f64>().ln();
    common + lse
}

fn run_filter(
    theta: &StaticParams,
    input: &FilterInput,
    mut sink: Option<&mut FilterPath>,
) -> Result<(f64, usize, usize)> {
    theta.validate()?;
    let ln_h5 = theta.h5.ln();
    let ln_h10 = theta.h10.ln();
    let mut total = 0.0;
    let mut n_contrib = 0;
    let mut clamp_count = 0;

    let record = |sink: &mut Option<&mut FilterPath>, t: usize, st: &FilterState, ll: f64| {
        if let Some(path) = sink {
            path.mu[t] = st.mu;
            path.alpha[t] = st.alpha;
            path.eta[t] = st.eta;
            path.phi1[t] = st.phi[0];
            path.phi5[t] = st.phi[1];
            path.phi10[t] = st.phi[2];
            path.loglik_contrib[t] = ll;
        }
    };

    for seg in &input.segments {
        if seg.len() < 3 {
            return Err(Error::InvalidParameter(
                "each day segment needs at least 3 observations".into(),
            ));
        }
        // stationary-mean initialization; unit-mean standardization makes
        // the mean log covariates effectively zero
        let mut state = initial_state(theta, input.y[seg.start], 0.0, 0.0);
        record(&mut sink, seg.start, &state, f64::NAN);
        // t = start+1 knows y_{t-1} but not y_{t-2}: hold alpha and eta
        let t1 = seg.start + 1;
        state.mu = input.mu[t1];
        record(&mut sink, t1, &state, f64::NAN);

        for t in seg.start + 2..seg.end {
            let score_alpha = state.alpha.exp() * input.score_base[t] + 0.5;
            let mut alpha =
                theta.c + theta.b * state.alpha + theta.a * score_alpha + theta.d * input.ln_z[t];
            if !alpha.is_finite() {
                return Err(Error::FilterDiverged { index: t, reason: format!("alpha = {alpha}") });
            }
            if alpha.abs() > ALPHA_CLAMP {
                alpha = alpha.clamp(-ALPHA_CLAMP, ALPHA_CLAMP);
                clamp_count += 1;
            }
            let eta = theta.f * state.eta
                + theta.g1 * input.ln_mu[t]
                + theta.g2 * (input.ln_mu[t] - alpha)
                + theta.g3 * input.ln_z[t]
                + theta.g4 * input.ln_v[t];
            if !eta.is_finite() {
                return Err(Error::FilterDiverged { index: t, reason: format!("eta = {eta}") });
            }
            state = FilterState {
                mu: input.mu[t],
                alpha,
                eta,
                phi: portions(eta, theta.h5, theta.h10),
                clamped: false,
            };
            let ll = tick_loglik(input, t, alpha, eta, ln_h5, ln_h10);
            if ll.is_nan() {
                return Err(Error::FilterDiverged {
                    index: t,
                    reason: "non-positive component normalizing constant".into(),
                });
            }
            total += ll;
            n_contrib += 1;
            record(&mut sink, t, &state, ll);
        }
    }
    Ok((total, n_contrib, clamp_count))
}

/// Total log-likelihood only; the fast path for the optimizer.
pub fn loglik(theta: &StaticParams, input: &FilterInput) -> Result<(f64, usize)> {
    let (total, n, clamps) = run_filter(theta, input, None)?;
    let _ = clamps;
    Ok((total, n))
}

/// Full filtered path with per-tick likelihood contributions.
pub fn filter_series(theta: &StaticParams, ts: &TickSeries) -> Result<FilterPath> {
    let input = FilterInput::build(ts);
    let n = ts.len();
    let mut path = FilterPath {
        mu: vec![f64::NAN; n],
        alpha: vec![f64::NAN; n],
        eta: vec![f64::NAN; n],
        phi1: vec![f64::NAN; n],
        phi5: vec![f64::NAN; n],
        phi10: vec![f64::NAN; n],
        loglik_contrib: vec![f64::NAN; n],
        loglik_total: 0.0,
        n_contrib: 0,
        clamp_count: 0,
    };
    let (total, n_contrib, clamp_count) = run_filter(theta, &input, Some(&mut path))?;
    path.loglik_total = total;
    path.n_contrib = n_contrib;
    path.clamp_count = clamp_count;
    Ok(path)
}

/// Source of durations and volumes for the simulator.
#[derive(Debug, Clone)]
pub enum ExogenousPolicy {
    /// Caller-supplied series, consumed positionally.
    Fixed { z: Vec<f64>, v: Vec<f64> },
    /// I.i.d. log-normal draws with unit mean and the given log-scales.
    LogNormal { z_log_sd: f64, v_log_sd: f64 },
}

impl Default for ExogenousPolicy {
    fn default() -> Self {
        ExogenousPolicy::LogNormal { z_log_sd: 1.0, v_log_sd: 1.0 }
    }
}

/// Forward-simulate a tick series from the model. Deterministic given
/// the seed.
pub fn simulate(
    theta: &StaticParams,
    exo: &ExogenousPolicy,
    y0: u64,
    rng_seed: u64,
    n: usize,
) -> Result<TickSeries> {
    theta.validate()?;
    if n < 3 {
        return Err(Error::InvalidParameter("n must be at least 3".into()));
    }
    if y0 == 0 {
        return Err(Error::InvalidParameter("y0 must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let (z, v): (Vec<f64>, Vec<f64>) = match exo {
        ExogenousPolicy::Fixed { z, v } => {
            if z.len() < n || v.len() < n {
                return Err(Error::InvalidParameter("fixed exogenous series too short".into()));
            }
            (z[..n].to_vec(), v[..n].to_vec())
        }
        ExogenousPolicy::LogNormal { z_log_sd, v_log_sd } => {
            let zd = LogNormal::new(-0.5 * z_log_sd * z_log_sd, *z_log_sd)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let vd = LogNormal::new(-0.5 * v_log_sd * v_log_sd, *v_log_sd)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let z = (0..n).map(|_| zd.sample(&mut rng)).collect();
            let v = (0..n).map(|_| vd.sample(&mut rng)).collect();
            (z, v)
        }
    };

    let mut y = Vec::with_capacity(n);
    let mut state = initial_state(theta, y0, 0.0, 0.0);
    let mut y_prev = y0;
    let mut y_prev2 = y0;
    for t in 0..n {
        if t >= 2 {
            state = filter_step(theta, &state, y_prev, y_prev2, z[t], v[t]).map_err(|e| {
                Error::Simulation { index: t, reason: e.to_string() }
            })?;
        } else {
            state.mu = y_prev as f64;
        }
        let dp = DPParams::new(state.mu, state.alpha)
            .map_err(|e| Error::Simulation { index: t, reason: e.to_string() })?;
        // pick the trader type, then draw only that component
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut k = MULTIPLES[0];
        for (j, &w) in state.phi.iter().enumerate() {
            acc += w;
            if u < acc {
                k = MULTIPLES[j];
                break;
            }
        }
        let comp = derive_trader_params(dp, k)
            .map_err(|e| Error::Simulation { index: t, reason: e.to_string() })?;
        let table = InversionTable::build(comp)
            .map_err(|e| Error::Simulation { index: t, reason: e.to_string() })?;
        let draw = k * table.draw(&mut rng);
        if draw == 0 {
            return Err(Error::Simulation { index: t, reason: "price path hit 0".into() });
        }
        y.push(draw);
        y_prev2 = y_prev;
        y_prev = draw;
    }

    let mut timestamps = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &zt in &z {
        acc += zt;
        timestamps.push(acc);
    }
    TickSeries::new(timestamps, y, z, v)
}

/// Mixture parameters of the state at one tick, for cross-checking the
/// filter's likelihood against the distribution module.
pub fn state_mixture(state: &FilterState) -> Result<MixtureParams> {
    MixtureParams::nickel_dime(
        DPParams::new(state.mu, state.alpha)?,
        state.phi[0],
        state.phi[1],
        state.phi[2],
    )
}
