//! Tick-multiple mixture of double Poisson distributions. Each trader type
//! quotes only multiples of its tick multiple `k`; the component for type
//! `k` is a double Poisson on the k-multiple support, reparameterized so
//! that its mean and variance match the parent (mu, mu e^{-alpha})
//! regardless of `k`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::double_poisson::{self, DPParams, NormConstMethod};
use crate::error::{Error, Result};

/// Ordered set of distinct tick multiples; always contains 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TickMultipleSet {
    multiples: Vec<u64>,
}

impl TickMultipleSet {
    pub fn new(multiples: Vec<u64>) -> Result<Self> {
        let mut m = multiples;
        m.sort_unstable();
        m.dedup();
        if m.first() != Some(&1) {
            return Err(Error::InvalidParameter(
                "tick multiple set must contain 1".into(),
            ));
        }
        Ok(Self { multiples: m })
    }

    /// Default for cent-priced equities: cent, nickel and dime traders.
    pub fn nickel_dime() -> Self {
        Self {
            multiples: vec![1, 5, 10],
        }
    }

    pub fn multiples(&self) -> &[u64] {
        &self.multiples
    }

    pub fn len(&self) -> usize {
        self.multiples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for TickMultipleSet {
    fn default() -> Self {
        Self::nickel_dime()
    }
}

/// Parent (mu, alpha) plus one mixture weight per tick multiple.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub dp: DPParams,
    pub multiples: TickMultipleSet,
    pub phi: Vec<f64>,
}

impl MixtureParams {
    pub fn new(dp: DPParams, multiples: TickMultipleSet, phi: Vec<f64>) -> Result<Self> {
        if phi.len() != multiples.len() {
            return Err(Error::InvalidParameter(
                "phi must have one weight per tick multiple".into(),
            ));
        }
        if phi.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("phi weights must be >= 0".into()));
        }
        let total: f64 = phi.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "phi must sum to 1, got {total}"
            )));
        }
        Ok(Self { dp, multiples, phi })
    }

    pub fn nickel_dime(dp: DPParams, phi1: f64, phi5: f64, phi10: f64) -> Result<Self> {
        Self::new(dp, TickMultipleSet::nickel_dime(), vec![phi1, phi5, phi10])
    }
}

/// Component parameters for trader type `k`: (mu/k, alpha + ln k). These
/// preserve mean mu and variance mu e^{-alpha} on the k-multiple support.
pub fn derive_trader_params(dp: DPParams, k: u64) -> Result<DPParams> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    DPParams::new(dp.mu / k as f64, dp.alpha + (k as f64).ln())
}

/// Pmf of trader type `k` at `y`: zero off the k-multiple support,
/// otherwise the component double Poisson evaluated at y/k.
pub fn trader_pmf(dp: DPParams, k: u64, y: u64, method: NormConstMethod) -> Result<f64> {
    if y % k != 0 {
        return Ok(0.0);
    }
    double_poisson::pmf(derive_trader_params(dp, k)?, y / k, method)
}

/// Mixture pmf: sum of phi_k * trader_pmf over the tick multiple set.
pub fn mixture_pmf(mp: &MixtureParams, y: u64, method: NormConstMethod) -> Result<f64> {
    let mut acc = 0.0;
    for (&k, &w) in mp.multiples.multiples().iter().zip(&mp.phi) {
        if w > 0.0 {
            acc += w * trader_pmf(mp.dp, k, y, method)?;
        }
    }
    Ok(acc)
}

/// Closed-form mixture log-likelihood: the common double Poisson kernel
/// plus a log-sum over the divisibility-filtered component terms, each
/// carrying sqrt(k) / C_k with C_k the component normalizing constant.
/// The inner sum runs in log-space.
pub fn mixture_log_lik(mp: &MixtureParams, y: u64, method: NormConstMethod) -> Result<f64> {
    if y == 0 {
        return Err(Error::Domain("prices are strictly positive".into()));
    }
    let ea = mp.dp.alpha.exp();
    let yf = y as f64;
    let common = ea * yf * (mp.dp.mu / yf).ln() + mp.dp.alpha / 2.0 + ea * yf - ea * mp.dp.mu;

    let mut logs: Vec<f64> = Vec::with_capacity(mp.phi.len());
    for (&k, &w) in mp.multiples.multiples().iter().zip(&mp.phi) {
        if w == 0.0 || y % k != 0 {
            continue;
        }
        let q = (y / k) as f64;
        let c_k = double_poisson::norm_const(derive_trader_params(mp.dp, k)?, method)?;
        let term =
            w.ln() + 0.5 * (k as f64).ln() - c_k.ln() + q * q.ln() - ln_gamma(q + 1.0) - q;
        logs.push(term);
    }
    if logs.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(common + lse)
}

/// Two-stage draw: trader type from phi, then k times a component draw.
/// Deterministic given the seed.
pub fn mixture_sample(mp: &MixtureParams, rng_seed: u64, n: usize) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    mixture_sample_with(mp, &mut rng, n)
}

pub fn mixture_sample_with<R: Rng>(mp: &MixtureParams, rng: &mut R, n: usize) -> Result<Vec<u64>> {
    let tables: Vec<_> = mp
        .multiples
        .multiples()
        .iter()
        .zip(&mp.phi)
        .map(|(&k, &w)| -> Result<_> {
            if w > 0.0 {
                Ok(Some(crate::double_poisson::InversionTable::build(
                    derive_trader_params(mp.dp, k)?,
                )?))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(draw_one(mp, &tables, rng));
    }
    Ok(out)
}

fn draw_one<R: Rng>(
    mp: &MixtureParams,
    tables: &[Option<crate::double_poisson::InversionTable>],
    rng: &mut R,
) -> u64 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut idx = mp.phi.len() - 1;
    for (i, &w) in mp.phi.iter().enumerate() {
        acc += w;
        if u < acc {
            idx = i;
            break;
        }
    }
    let k = mp.multiples.multiples()[idx];
    let table = tables[idx].as_ref().expect("positive-weight component");
    k * table.draw(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn figure1() -> MixtureParams {
        MixtureParams::nickel_dime(DPParams::new(10013.0, 7.0).unwrap(), 0.95, 0.02, 0.03)
            .unwrap()
    }

    #[test]
    fn derive_params_identity_and_solution() {
        let dp = DPParams::new(100.0, 0.0).unwrap();
        let p1 = derive_trader_params(dp, 1).unwrap();
        assert_eq!((p1.mu, p1.alpha), (100.0, 0.0));
        let p5 = derive_trader_params(dp, 5).unwrap();
        assert_relative_eq!(p5.mu, 20.0);
        assert_relative_eq!(p5.alpha, 5.0f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn component_moments_preserved() {
        // brute-force mean/variance over the k-multiple support
        let dp = DPParams::new(10013.0, 7.0).unwrap();
        for &k in &[1u64, 5, 10] {
            let comp = derive_trader_params(dp, k).unwrap();
            let (lo, hi) = crate::double_poisson::support_window(comp).unwrap();
            let m = (2.0 * comp.mu).ceil() as u64 + 1;
            let mut e = 0.0;
            let mut e2 = 0.0;
            for q in lo..=hi {
                let pr =
                    crate::double_poisson::pmf(comp, q, NormConstMethod::TruncatedSum(m)).unwrap();
                let y = (k * q) as f64;
                e += y * pr;
                e2 += y * y * pr;
            }
            let var = e2 - e * e;
            assert!((e - 10013.0).abs() < 1e-3 * 10013.0, "k={k} mean={e}");
            // the variance match is first-order: on the coarse k-grid the
            // discreteness correction shows up at the percent level
            let target = 10013.0 * (-7.0f64).exp();
            assert!((var - target).abs() < 5e-2 * target, "k={k} var={var}");
        }
    }

    #[test]
    fn trader_pmf_support_restriction() {
        let dp = DPParams::new(100.0, 1.0).unwrap();
        let m = NormConstMethod::EfronApprox;
        assert_eq!(trader_pmf(dp, 5, 103, m).unwrap(), 0.0);
        assert_relative_eq!(
            trader_pmf(dp, 1, 100, m).unwrap(),
            crate::double_poisson::pmf(dp, 100, m).unwrap()
        );
        // k=10 component evaluated at y/k
        let comp = derive_trader_params(dp, 10).unwrap();
        assert_relative_eq!(
            trader_pmf(dp, 10, 100, m).unwrap(),
            crate::double_poisson::pmf(comp, 10, m).unwrap()
        );
    }

    #[test]
    fn degenerate_mixture_is_plain_double_poisson() {
        let dp = DPParams::new(100.0, 1.0).unwrap();
        let mp = MixtureParams::nickel_dime(dp, 1.0, 0.0, 0.0).unwrap();
        let m = NormConstMethod::EfronApprox;
        for y in [90u64, 95, 100, 101] {
            assert_relative_eq!(
                mixture_pmf(&mp, y, m).unwrap(),
                crate::double_poisson::pmf(dp, y, m).unwrap()
            );
        }
        // Poisson reduction of the closed form
        let mp = MixtureParams::nickel_dime(DPParams::new(2.0, 0.0).unwrap(), 1.0, 0.0, 0.0)
            .unwrap();
        assert_relative_eq!(
            mixture_log_lik(&mp, 2, m).unwrap(),
            (2.0 * (-2.0f64).exp()).ln(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn figure1_divisibility_structure() {
        let mp = figure1();
        // exact constants: the k=10 component is so underdispersed here
        // that the analytic approximation is off at the percent level
        let m = NormConstMethod::TruncatedSum(20_126);
        // 10013 is not a multiple of 5: only the k=1 term contributes
        let only_k1 = 0.95 * trader_pmf(mp.dp, 1, 10013, m).unwrap();
        assert_relative_eq!(mixture_pmf(&mp, 10013, m).unwrap(), only_k1);
        // 10010 collects all three components; term-by-term brute force
        let brute: f64 = [(1u64, 0.95), (5, 0.02), (10, 0.03)]
            .iter()
            .map(|&(k, w)| w * trader_pmf(mp.dp, k, 10010, m).unwrap())
            .sum();
        assert_relative_eq!(mixture_pmf(&mp, 10010, m).unwrap(), brute);
        // spike at the dime multiple relative to both neighbors
        let at = |y| mixture_pmf(&mp, y, m).unwrap();
        assert!(at(10010) > at(10009));
        assert!(at(10010) > at(10011));
    }

    #[test]
    fn closed_form_matches_log_of_pmf() {
        let mp = figure1();
        let m = NormConstMethod::EfronApprox;
        for y in [10010u64, 10013, 10015, 10020, 9990, 10001] {
            let ll = mixture_log_lik(&mp, y, m).unwrap();
            let direct = mixture_pmf(&mp, y, m).unwrap().ln();
            assert!((ll - direct).abs() < 1e-8, "y={y}: {ll} vs {direct}");
        }
    }

    #[test]
    fn log_lik_rejects_zero_price() {
        let mp = figure1();
        assert!(mixture_log_lik(&mp, 0, NormConstMethod::EfronApprox).is_err());
    }

    #[test]
    fn sample_determinism_and_clustering_mass() {
        let mp = figure1();
        let a = mixture_sample(&mp, 5, 500).unwrap();
        let b = mixture_sample(&mp, 5, 500).unwrap();
        assert_eq!(a, b);

        // fraction of draws divisible by 5 vs pmf mass over 5-multiples
        let n = 200_000;
        let draws = mixture_sample(&mp, 9, n).unwrap();
        let frac = draws.iter().filter(|&&y| y % 5 == 0).count() as f64 / n as f64;
        let m = NormConstMethod::TruncatedSum(20_126);
        let (lo, hi) = crate::double_poisson::support_window(mp.dp).unwrap();
        let mass: f64 = (lo..=hi)
            .filter(|y| y % 5 == 0)
            .map(|y| mixture_pmf(&mp, y, m).unwrap())
            .sum();
        let band = 4.0 * (mass * (1.0 - mass) / n as f64).sqrt();
        assert!((frac - mass).abs() < band, "frac={frac} mass={mass}");

        // mixture mean stays near mu
        let mean = draws.iter().sum::<u64>() as f64 / n as f64;
        let sigma = mp.dp.sigma();
        assert!((mean - 10013.0).abs() < 4.0 * sigma / (n as f64).sqrt() + 0.05);
    }

    #[test]
    fn mixture_mass_normalizes() {
        let mp = figure1();
        let m = NormConstMethod::TruncatedSum(20_126);
        let (lo, hi) = crate::double_poisson::support_window(mp.dp).unwrap();
        // window of the widest component (k=10) scaled back to price units
        let comp = derive_trader_params(mp.dp, 10).unwrap();
        let (clo, chi) = crate::double_poisson::support_window(comp).unwrap();
        let lo = lo.min(clo * 10);
        let hi = hi.max(chi * 10);
        let mass: f64 = (lo..=hi).map(|y| mixture_pmf(&mp, y, m).unwrap()).sum();
        assert!((mass - 1.0).abs() < 1e-6, "mass = {mass}");
    }
}
