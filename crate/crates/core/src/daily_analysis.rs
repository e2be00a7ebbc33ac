//! Daily pipeline: per-stock-day clustering measure and covariates,
//! Parzen realized-kernel volatility, and the two-way fixed-effects
//! panel regression with standard errors clustered by stock and day.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::dynamics::TickSeries;
use crate::error::{Error, Result};

/// Excess relative frequency of nickel/dime tick multiples over the
/// uniform final-digit expectation of 0.2.
pub fn price_clustering_measure(prices: &[u64]) -> Result<f64> {
    if prices.is_empty() {
        return Err(Error::Domain("empty price list".into()));
    }
    let frac = prices.iter().filter(|&&p| p % 5 == 0).count() as f64 / prices.len() as f64;
    Ok(frac - 0.2)
}

#[derive(Debug, Clone)]
pub struct RKConfig {
    /// Forced bandwidth; `None` selects the plug-in rule.
    pub bandwidth: Option<usize>,
    /// End-point jittering: prices averaged locally at both ends.
    pub jitter: usize,
}

impl Default for RKConfig {
    fn default() -> Self {
        Self { bandwidth: None, jitter: 2 }
    }
}

/// Parzen weight function.
fn parzen(x: f64) -> f64 {
    if x < 0.0 || x > 1.0 {
        0.0
    } else if x <= 0.5 {
        1.0 - 6.0 * x * x + 6.0 * x * x * x
    } else {
        2.0 * (1.0 - x).powi(3)
    }
}

/// Flat-top realized kernel with Parzen weights over one day of log
/// prices. Bandwidth defaults to the plug-in rule
/// H = c* (omega^2 / IV)^{2/5} n^{3/5} with the noise variance estimated
/// from top-frequency squared returns.
pub fn realized_kernel(log_prices: &[f64], cfg: &RKConfig) -> Result<f64> {
    if log_prices.len() < 2 {
        return Err(Error::Domain("need at least 2 observations in the day".into()));
    }
    // end-point jittering by local averaging
    let mut p = log_prices.to_vec();
    let j = cfg.jitter.max(1).min(p.len());
    if j > 1 {
        let head = p[..j].iter().sum::<f64>() / j as f64;
        let tail = p[p.len() - j..].iter().sum::<f64>() / j as f64;
        p[0] = head;
        let last = p.len() - 1;
        p[last] = tail;
    }
    let returns: Vec<f64> = p.windows(2).map(|w| w[1] - w[0]).collect();
    let n = returns.len();
    let rv: f64 = returns.iter().map(|r| r * r).sum();
    if rv == 0.0 {
        return Ok(0.0);
    }

    let h_max = n.saturating_sub(2);
    let h = match cfg.bandwidth {
        Some(h) => {
            if h > h_max {
                eprintln!("realized_kernel: bandwidth {h} shrunk to {h_max} (n = {n})");
                h_max
            } else {
                h
            }
        }
        None => {
            // c* = ((12)^2 / 0.269)^{1/5} for the Parzen kernel
            let c_star = (144.0f64 / 0.269).powf(0.2);
            let noise_var = rv / (2.0 * n as f64);
            let xi2 = noise_var / rv;
            let h = (c_star * xi2.powf(0.4) * (n as f64).powf(0.6)).ceil() as usize;
            h.min(h_max)
        }
    };

    let gamma = |lag: usize| -> f64 {
        returns[lag..]
            .iter()
            .zip(&returns[..n - lag])
            .map(|(a, b)| a * b)
            .sum()
    };
    let mut rk = gamma(0);
    for lag in 1..=h {
        let w = parzen((lag - 1) as f64 / h as f64);
        rk += 2.0 * w * gamma(lag);
    }
    if rk < -1e-12 {
        return Err(Error::Domain(format!("realized kernel strongly negative: {rk}")));
    }
    Ok(rk.max(0.0))
}

/// One stock-day of the panel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DailyRow {
    pub stock: String,
    pub day: String,
    pub pc: f64,
    pub mean_price: f64,
    pub rk_vol: f64,
    pub mean_duration: f64,
    pub mean_volume: f64,
}

/// Per-stock-day covariates from cleaned tick series. Stock-days with
/// fewer than 2 trades are skipped.
pub fn build_daily_panel(
    per_stock: &BTreeMap<String, TickSeries>,
    tick_scale: u64,
) -> Result<Vec<DailyRow>> {
    let mut rows = Vec::new();
    for (stock, ts) in per_stock {
        for (day_idx, seg) in ts.segments().into_iter().enumerate() {
            if seg.len() < 2 {
                continue;
            }
            let ticks = &ts.y[seg.clone()];
            let pc = price_clustering_measure(ticks)?;
            let mean_price =
                ticks.iter().map(|&y| y as f64).sum::<f64>() / ticks.len() as f64 / tick_scale as f64;
            let log_prices: Vec<f64> = ticks.iter().map(|&y| (y as f64).ln()).collect();
            let rk_vol = realized_kernel(&log_prices, &RKConfig::default())?;
            // the first duration of a day is a placeholder, not a gap
            let durs = &ts.z[seg.start + 1..seg.end];
            let mean_duration = durs.iter().sum::<f64>() / durs.len() as f64;
            let vols = &ts.v[seg.clone()];
            let mean_volume = vols.iter().sum::<f64>() / vols.len() as f64;
            let day = chrono::DateTime::from_timestamp(ts.timestamps[seg.start] as i64, 0)
                .map(|d| d.date_naive().to_string())
                .unwrap_or_else(|| format!("day{day_idx}"));
            rows.push(DailyRow {
                stock: stock.clone(),
                day,
                pc,
                mean_price,
                rk_vol,
                mean_duration,
                mean_volume,
            });
        }
    }
    Ok(rows)
}

/// Covariate selection of the three reported models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelSpec {
    /// Price, volatility, duration (volume dropped).
    ModelI,
    /// Price, duration, volume (volatility dropped).
    ModelII,
    /// Full set.
    ModelIII,
}

impl ModelSpec {
    pub fn covariates(&self) -> Vec<&'static str> {
        match self {
            ModelSpec::ModelI => vec!["price", "volatility", "duration"],
            ModelSpec::ModelII => vec!["price", "duration", "volume"],
            ModelSpec::ModelIII => vec!["price", "volatility", "duration", "volume"],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelFit {
    pub model: ModelSpec,
    pub covariates: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub tstats: Vec<f64>,
    pub stars: Vec<String>,
    pub residuals: Vec<f64>,
    pub fe_stock: BTreeMap<String, f64>,
    pub fe_day: BTreeMap<String, f64>,
    pub n: usize,
    pub n_stocks: usize,
    pub n_days: usize,
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, names: &[String]) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let (pivot, pmax) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if pmax < 1e-12 {
            return Err(Error::Singular(names.to_vec()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let factor = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= factor * a[col][c];
                }
                b[r] -= factor * b[col];
            }
        }
    }
    Ok((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn invert(a: &[Vec<f64>], names: &[String]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve(a.to_vec(), e, names)?);
    }
    // transpose column solutions into the inverse
    let mut inv = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            inv[i][j] = cols[j][i];
        }
    }
    Ok(inv)
}

/// Univariate two-way fixed-effects slope of pc on one log covariate,
/// plus an intercept anchored at the raw means so the fitted line can be
/// drawn through the pooled scatter.
pub fn univariate_line(panel: &[DailyRow], name: &str) -> Result<(f64, f64)> {
    let usable: Vec<&DailyRow> = panel.iter().filter(|r| r.rk_vol > 0.0).collect();
    if usable.len() < 3 {
        return Err(Error::Domain("too few usable stock-days".into()));
    }
    let cov = |r: &DailyRow| -> f64 {
        match name {
            "price" => r.mean_price.ln(),
            "volatility" => r.rk_vol.ln(),
            "duration" => r.mean_duration.ln(),
            "volume" => r.mean_volume.ln(),
            _ => f64::NAN,
        }
    };
    if cov(usable[0]).is_nan() {
        return Err(Error::InvalidParameter(format!("unknown covariate {name}")));
    }
    let stocks: Vec<&str> = {
        let mut s: Vec<&str> = usable.iter().map(|r| r.stock.as_str()).collect();
        s.sort();
        s.dedup();
        s
    };
    let days: Vec<&str> = {
        let mut d: Vec<&str> = usable.iter().map(|r| r.day.as_str()).collect();
        d.sort();
        d.dedup();
        d
    };
    let gi: Vec<usize> = usable
        .iter()
        .map(|r| stocks.iter().position(|s| *s == r.stock).unwrap())
        .collect();
    let di: Vec<usize> = usable
        .iter()
        .map(|r| days.iter().position(|d| *d == r.day).unwrap())
        .collect();
    let mut yc: Vec<f64> = usable.iter().map(|r| r.pc).collect();
    let mut xc: Vec<f64> = usable.iter().map(|r| cov(r)).collect();
    let n = yc.len() as f64;
    let ybar = yc.iter().sum::<f64>() / n;
    let xbar = xc.iter().sum::<f64>() / n;
    demean_two_way(&mut yc, &gi, &di, stocks.len(), days.len(), 1e-10);
    demean_two_way(&mut xc, &gi, &di, stocks.len(), days.len(), 1e-10);
    let sxx: f64 = xc.iter().map(|x| x * x).sum();
    if sxx < 1e-12 {
        return Err(Error::Singular(vec![name.to_string()]));
    }
    let sxy: f64 = xc.iter().zip(&yc).map(|(x, y)| x * y).sum();
    let slope = sxy / sxx;
    Ok((slope, ybar - slope * xbar))
}

/// Two-way fixed-effects regression of pc on the selected log
/// covariates, with standard errors clustered by stock and by day using
/// the inclusion-exclusion rule.
pub fn fe_regression(panel: &[DailyRow], spec: ModelSpec) -> Result<PanelFit> {
    let stocks: Vec<String> = {
        let mut s: Vec<String> = panel.iter().map(|r| r.stock.clone()).collect();
        s.sort();
        s.dedup();
        s
    };
    let days: Vec<String> = {
        let mut d: Vec<String> = panel.iter().map(|r| r.day.clone()).collect();
        d.sort();
        d.dedup();
        d
    };
    if stocks.len() < 2 || days.len() < 2 {
        return Err(Error::Domain("need at least 2 stocks and 2 days".into()));
    }
    let usable: Vec<&DailyRow> = panel.iter().filter(|r| r.rk_vol > 0.0).collect();
    let n = usable.len();
    let names: Vec<String> = spec.covariates().iter().map(|s| s.to_string()).collect();
    let k = names.len();

    let covariate = |r: &DailyRow, name: &str| -> f64 {
        match name {
            "price" => r.mean_price.ln(),
            "volatility" => r.rk_vol.ln(),
            "duration" => r.mean_duration.ln(),
            "volume" => r.mean_volume.ln(),
            _ => unreachable!(),
        }
    };

    let stock_idx: BTreeMap<&str, usize> =
        stocks.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let day_idx: BTreeMap<&str, usize> =
        days.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
    let gi: Vec<usize> = usable.iter().map(|r| stock_idx[r.stock.as_str()]).collect();
    let di: Vec<usize> = usable.iter().map(|r| day_idx[r.day.as_str()]).collect();

    // columns: y then the covariates; two-way demeaning by alternating
    // projections to convergence
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    cols.push(usable.iter().map(|r| r.pc).collect());
    for name in &names {
        cols.push(usable.iter().map(|r| covariate(r, name)).collect());
    }
    for col in cols.iter_mut() {
        demean_two_way(col, &gi, &di, stocks.len(), days.len(), 1e-10);
    }
    let y = &cols[0];
    let x = &cols[1..];

    // normal equations on the demeaned data
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for i in 0..n {
        for a in 0..k {
            xty[a] += x[a][i] * y[i];
            for b in a..k {
                xtx[a][b] += x[a][i] * x[b][i];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtx[a][b] = xtx[b][a];
        }
    }
    let beta = solve(xtx.clone(), xty, &names)?;
    let residuals: Vec<f64> = (0..n)
        .map(|i| y[i] - (0..k).map(|a| beta[a] * x[a][i]).sum::<f64>())
        .collect();

    // two-way cluster-robust covariance: stock + day - intersection
    let bread = invert(&xtx, &names)?;
    let meat_cluster = |group_of: &[usize], n_groups: usize| -> Vec<Vec<f64>> {
        let mut scores = vec![vec![0.0; k]; n_groups];
        for i in 0..n {
            for a in 0..k {
                scores[group_of[i]][a] += x[a][i] * residuals[i];
            }
        }
        let mut m = vec![vec![0.0; k]; k];
        for s in &scores {
            for a in 0..k {
                for b in 0..k {
                    m[a][b] += s[a] * s[b];
                }
            }
        }
        m
    };
    let m_stock = meat_cluster(&gi, stocks.len());
    let m_day = meat_cluster(&di, days.len());
    let mut m_white = vec![vec![0.0; k]; k];
    for i in 0..n {
        for a in 0..k {
            for b in 0..k {
                m_white[a][b] += x[a][i] * x[b][i] * residuals[i] * residuals[i];
            }
        }
    }
    let mut meat = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            meat[a][b] = m_stock[a][b] + m_day[a][b] - m_white[a][b];
        }
    }
    let mut cov = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            let mut s = 0.0;
            for p in 0..k {
                for q in 0..k {
                    s += bread[a][p] * meat[p][q] * bread[q][b];
                }
            }
            cov[a][b] = s;
        }
    }
    let se: Vec<f64> = (0..k).map(|a| cov[a][a].max(0.0).sqrt()).collect();
    let tstats: Vec<f64> = (0..k)
        .map(|a| if se[a] > 0.0 { beta[a] / se[a] } else { f64::NAN })
        .collect();
    let stars: Vec<String> = tstats
        .iter()
        .map(|t| {
            let t = t.abs();
            if t > 3.2905 {
                "***"
            } else if t > 2.5758 {
                "**"
            } else if t > 1.9600 {
                "*"
            } else {
                ""
            }
            .to_string()
        })
        .collect();

    // recover the fixed effects from the residual structure of the raw data
    let (fe_stock, fe_day) = recover_fixed_effects(&usable, &names, &beta, &covariate, &stocks, &days);

    Ok(PanelFit {
        model: spec,
        covariates: names,
        beta,
        se,
        tstats,
        stars,
        residuals,
        fe_stock,
        fe_day,
        n,
        n_stocks: stocks.len(),
        n_days: days.len(),
    })
}

fn demean_two_way(
    col: &mut [f64],
    gi: &[usize],
    di: &[usize],
    n_g: usize,
    n_d: usize,
    tol: f64,
) {
    let n = col.len();
    for _ in 0..10_000 {
        let mut shift: f64 = 0.0;
        let mut gm = vec![0.0; n_g];
        let mut gc = vec![0usize; n_g];
        for i in 0..n {
            gm[gi[i]] += col[i];
            gc[gi[i]] += 1;
        }
        for g in 0..n_g {
            gm[g] /= gc[g].max(1) as f64;
        }
        for i in 0..n {
            col[i] -= gm[gi[i]];
            shift = shift.max(gm[gi[i]].abs());
        }
        let mut dm = vec![0.0; n_d];
        let mut dc = vec![0usize; n_d];
        for i in 0..n {
            dm[di[i]] += col[i];
            dc[di[i]] += 1;
        }
        for d in 0..n_d {
            dm[d] /= dc[d].max(1) as f64;
        }
        for i in 0..n {
            col[i] -= dm[di[i]];
            shift = shift.max(dm[di[i]].abs());
        }
        if shift < tol {
            break;
        }
    }
}

fn recover_fixed_effects(
    rows: &[&DailyRow],
    names: &[String],
    beta: &[f64],
    covariate: &dyn Fn(&DailyRow, &str) -> f64,
    stocks: &[String],
    days: &[String],
) -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
    let part: Vec<f64> = rows
        .iter()
        .map(|r| {
            r.pc - names
                .iter()
                .zip(beta)
                .map(|(nm, b)| b * covariate(r, nm))
                .sum::<f64>()
        })
        .collect();
    let mut gamma: BTreeMap<String, f64> = stocks.iter().map(|s| (s.clone(), 0.0)).collect();
    let mut delta: BTreeMap<String, f64> = days.iter().map(|d| (d.clone(), 0.0)).collect();
    for _ in 0..1000 {
        let mut moved: f64 = 0.0;
        for s in stocks {
            let vals: Vec<f64> = rows
                .iter()
                .zip(&part)
                .filter(|(r, _)| &r.stock == s)
                .map(|(r, p)| p - delta[&r.day])
                .collect();
            if !vals.is_empty() {
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                moved = moved.max((m - gamma[s]).abs());
                gamma.insert(s.clone(), m);
            }
        }
        for d in days {
            let vals: Vec<f64> = rows
                .iter()
                .zip(&part)
                .filter(|(r, _)| &r.day == d)
                .map(|(r, p)| p - gamma[&r.stock])
                .collect();
            if !vals.is_empty() {
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                moved = moved.max((m - delta[d]).abs());
                delta.insert(d.clone(), m);
            }
        }
        if moved < 1e-12 {
            break;
        }
    }
    // normalize: day effects mean zero
    let dbar = delta.values().sum::<f64>() / delta.len() as f64;
    for v in delta.values_mut() {
        *v -= dbar;
    }
    for v in gamma.values_mut() {
        *v += dbar;
    }
    (gamma, delta)
}

/// Panel CSV with the fixed header order.
pub fn write_panel_csv<W: std::io::Write>(w: W, rows: &[DailyRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "stock",
        "day",
        "pc",
        "mean_price",
        "rk_vol",
        "mean_duration",
        "mean_volume",
    ])?;
    for r in rows {
        wtr.write_record(&[
            r.stock.clone(),
            r.day.clone(),
            r.pc.to_string(),
            r.mean_price.to_string(),
            r.rk_vol.to_string(),
            r.mean_duration.to_string(),
            r.mean_volume.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_panel_csv<R: std::io::Read>(r: R) -> Result<Vec<DailyRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Formatted coefficient table in the three-model layout: one column per
/// model, standard errors in parentheses, significance stars.
pub fn coefficient_table(fits: &[PanelFit]) -> String {
    let all_covs = ["price", "volatility", "duration", "volume"];
    let mut out = String::new();
    out.push_str("variable");
    for f in fits {
        out.push_str(&format!(",{:?}", f.model));
    }
    out.push('\n');
    for cov in all_covs {
        out.push_str(cov);
        for f in fits {
            match f.covariates.iter().position(|c| c == cov) {
                Some(i) => out.push_str(&format!(",{:.4}{}", f.beta[i], f.stars[i])),
                None => out.push(','),
            }
        }
        out.push('\n');
        out.push_str(&format!("{cov}_se"));
        for f in fits {
            match f.covariates.iter().position(|c| c == cov) {
                Some(i) => out.push_str(&format!(",({:.4})", f.se[i])),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pc_measure_baselines() {
        // uniform final digits: one in five ticks is a 5-multiple
        let uniform: Vec<u64> = (0..1000).map(|i| 10000 + i % 10).collect();
        let pc = price_clustering_measure(&uniform).unwrap();
        assert_relative_eq!(pc, 0.0, epsilon = 1e-12);

        let dimes: Vec<u64> = (0..100).map(|i| 10000 + 10 * i).collect();
        assert_relative_eq!(price_clustering_measure(&dimes).unwrap(), 0.8, epsilon = 1e-12);

        assert!(price_clustering_measure(&[]).is_err());

        // translation by whole dollars leaves pc unchanged
        let shifted: Vec<u64> = uniform.iter().map(|y| y + 500).collect();
        assert_relative_eq!(
            price_clustering_measure(&shifted).unwrap(),
            price_clustering_measure(&uniform).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn rk_constant_price_is_zero() {
        let p = vec![4.6; 500];
        assert_eq!(realized_kernel(&p, &RKConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn rk_h_zero_equals_realized_variance() {
        let prices: Vec<f64> = (0..200).map(|i| 4.6 + 0.001 * ((i * 7) % 13) as f64).collect();
        let cfg = RKConfig { bandwidth: Some(0), jitter: 1 };
        let rk = realized_kernel(&prices, &cfg).unwrap();
        let rv: f64 = prices.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        assert_relative_eq!(rk, rv, epsilon = 1e-15);
    }

    #[test]
    fn rk_invariances() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut prices = vec![4.6f64];
        for _ in 0..300 {
            let step: f64 = rng.gen_range(-0.002..0.002);
            prices.push(prices.last().unwrap() + step);
        }
        let cfg = RKConfig::default();
        let base = realized_kernel(&prices, &cfg).unwrap();
        let shifted: Vec<f64> = prices.iter().map(|p| p + 3.0).collect();
        assert_relative_eq!(realized_kernel(&shifted, &cfg).unwrap(), base, max_relative = 1e-10);
        let scaled: Vec<f64> = prices.iter().map(|p| 2.0 * p).collect();
        assert_relative_eq!(
            realized_kernel(&scaled, &cfg).unwrap(),
            4.0 * base,
            max_relative = 1e-10
        );
    }

    #[test]
    fn rk_recovers_diffusion_variance() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let sigma2 = 1e-4;
        let n = 2000;
        let mut acc = 0.0;
        let mut total = 0.0;
        for _ in 0..100 {
            let step = (sigma2 / n as f64).sqrt();
            let mut p = vec![0.0f64];
            for _ in 0..n {
                let u: f64 = rng.gen();
                let v: f64 = rng.gen();
                let z = (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos();
                p.push(p.last().unwrap() + step * z);
            }
            acc += realized_kernel(&p, &RKConfig::default()).unwrap();
            total += 1.0;
        }
        let mean_rk = acc / total;
        assert!((mean_rk - sigma2).abs() / sigma2 < 0.1, "mean RK = {mean_rk}");
    }

    fn synthetic_panel(n_stocks: usize, n_days: usize, beta: &[f64; 4], noise: f64) -> Vec<DailyRow> {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        for s in 0..n_stocks {
            let gamma = 0.1 * s as f64;
            for d in 0..n_days {
                let delta = 0.05 * (d as f64 - n_days as f64 / 2.0);
                let price: f64 = 50.0 + rng.gen_range(0.0..200.0);
                let vol: f64 = (1e-5f64).max(rng.gen_range(1e-5..1e-3));
                let dur: f64 = rng.gen_range(0.5..10.0);
                let volu: f64 = rng.gen_range(50.0..5000.0);
                let eps = noise * rng.gen_range(-1.0..1.0);
                let pc = gamma
                    + delta
                    + beta[0] * price.ln()
                    + beta[1] * vol.ln()
                    + beta[2] * dur.ln()
                    + beta[3] * volu.ln()
                    + eps;
                rows.push(DailyRow {
                    stock: format!("S{s:02}"),
                    day: format!("2020-01-{:02}", d + 1),
                    pc,
                    mean_price: price,
                    rk_vol: vol,
                    mean_duration: dur,
                    mean_volume: volu,
                });
            }
        }
        rows
    }

    #[test]
    fn noiseless_panel_recovers_beta_exactly() {
        let beta = [-0.12, 0.70, -0.01, 3.96];
        let panel = synthetic_panel(4, 6, &beta, 0.0);
        let fit = fe_regression(&panel, ModelSpec::ModelIII).unwrap();
        for (b, expect) in fit.beta.iter().zip(&beta) {
            assert_relative_eq!(b, expect, epsilon = 1e-8);
        }
        // residuals orthogonal to the demeaned regressors
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-8));
    }

    #[test]
    fn matches_dummy_variable_least_squares() {
        let beta = [-0.12, 0.70, -0.01, 3.96];
        let panel = synthetic_panel(3, 4, &beta, 0.05);
        let fit = fe_regression(&panel, ModelSpec::ModelIII).unwrap();
        let oracle = dummy_ls(&panel, &ModelSpec::ModelIII.covariates());
        for (a, b) in fit.beta.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn singularity_is_reported() {
        // duplicate covariate information: volatility proportional to volume
        let mut panel = synthetic_panel(3, 4, &[0.1, 0.2, 0.3, 0.4], 0.01);
        for r in panel.iter_mut() {
            r.rk_vol = r.mean_volume * r.mean_volume; // ln rk = 2 ln volume
        }
        let err = fe_regression(&panel, ModelSpec::ModelIII);
        assert!(matches!(err, Err(Error::Singular(_))));
    }

    // brute-force least squares with explicit stock and day dummies
    fn dummy_ls(panel: &[DailyRow], covs: &[&str]) -> Vec<f64> {
        let stocks: Vec<String> = {
            let mut s: Vec<String> = panel.iter().map(|r| r.stock.clone()).collect();
            s.sort();
            s.dedup();
            s
        };
        let days: Vec<String> = {
            let mut d: Vec<String> = panel.iter().map(|r| r.day.clone()).collect();
            d.sort();
            d.dedup();
            d
        };
        let k = covs.len();
        // columns: covariates, stock dummies, day dummies (first day dropped)
        let dim = k + stocks.len() + days.len() - 1;
        let n = panel.len();
        let mut x = vec![vec![0.0; dim]; n];
        let mut y = vec![0.0; n];
        for (i, r) in panel.iter().enumerate() {
            y[i] = r.pc;
            for (a, c) in covs.iter().enumerate() {
                x[i][a] = match *c {
                    "price" => r.mean_price.ln(),
                    "volatility" => r.rk_vol.ln(),
                    "duration" => r.mean_duration.ln(),
                    "volume" => r.mean_volume.ln(),
                    _ => unreachable!(),
                };
            }
            let si = stocks.iter().position(|s| s == &r.stock).unwrap();
            x[i][k + si] = 1.0;
            let di = days.iter().position(|d| d == &r.day).unwrap();
            if di > 0 {
                x[i][k + stocks.len() + di - 1] = 1.0;
            }
        }
        let mut xtx = vec![vec![0.0; dim]; dim];
        let mut xty = vec![0.0; dim];
        for i in 0..n {
            for a in 0..dim {
                xty[a] += x[i][a] * y[i];
                for b in 0..dim {
                    xtx[a][b] += x[i][a] * x[i][b];
                }
            }
        }
        let names: Vec<String> = (0..dim).map(|i| format!("c{i}")).collect();
        let all = solve(xtx, xty, &names).unwrap();
        all[..k].to_vec()
    }

    #[test]
    fn clustered_errors_finite_and_positive_with_noise() {
        let beta = [0.1, 0.2, -0.3, 0.4];
        let panel = synthetic_panel(6, 8, &beta, 0.1);
        let fit = fe_regression(&panel, ModelSpec::ModelIII).unwrap();
        assert!(fit.se.iter().all(|s| s.is_finite() && *s > 0.0));
        // demeaned residuals orthogonal to each demeaned regressor: the
        // columns come back from the fit only implicitly, so check via
        // the dummy oracle instead that betas agree
        let oracle = dummy_ls(&panel, &ModelSpec::ModelIII.covariates());
        for (a, b) in fit.beta.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn univariate_line_recovers_single_effect() {
        // only volatility enters the outcome, so the univariate slope is exact
        let panel = synthetic_panel(4, 6, &[0.0, 0.3, 0.0, 0.0], 0.0);
        let (slope, intercept) = univariate_line(&panel, "volatility").unwrap();
        assert_relative_eq!(slope, 0.3, epsilon = 1e-8);
        assert!(intercept.is_finite());
        assert!(univariate_line(&panel, "nonsense").is_err());
    }

    #[test]
    fn panel_csv_round_trip() {
        let rows = synthetic_panel(2, 2, &[0.1, 0.2, 0.3, 0.4], 0.0);
        let mut buf = Vec::new();
        write_panel_csv(&mut buf, &rows).unwrap();
        let back = read_panel_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), rows.len());
        assert_relative_eq!(back[0].pc, rows[0].pc, epsilon = 1e-12);
    }
}
