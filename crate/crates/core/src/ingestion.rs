//! Raw trade-record parsing and the tick-level cleaning pipeline:
//! suffix pre-filter, trading-hours window, zero prices, off-exchange
//! trades, corrected trades, abnormal sale conditions, a rolling
//! median/MAD outlier filter, and mode-price collapse of same-timestamp
//! duplicates. Produces an integer-tick series with durations plus a
//! per-rule audit report.

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};
use std::io::Read;

use crate::dynamics::TickSeries;
use crate::error::{Error, Result};

/// Exact decimal price, kept away from binary floats so tick conversion
/// is never a rounding question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PriceDecimal {
    /// Value scaled by 10^scale.
    pub units: i64,
    pub scale: u32,
}

impl PriceDecimal {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Format("empty price".into()));
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if frac_part.len() > 9 {
            return Err(Error::Format(format!("price '{s}' has too many decimals")));
        }
        let digits: String = format!("{int_part}{frac_part}");
        let units: i64 = digits
            .parse()
            .map_err(|_| Error::Format(format!("unparseable price '{s}'")))?;
        if units < 0 {
            return Err(Error::Format(format!("negative price '{s}'")));
        }
        Ok(Self { units, scale: frac_part.len() as u32 })
    }

    pub fn to_f64(&self) -> f64 {
        self.units as f64 / 10f64.powi(self.scale as i32)
    }

    /// Integer ticks at the given scale, or a precision error if the
    /// price is not exactly representable there.
    pub fn to_ticks(&self, tick_scale: u64) -> Result<u64> {
        let pow = 10i64.pow(self.scale);
        let scaled = self
            .units
            .checked_mul(tick_scale as i64)
            .ok_or_else(|| Error::Precision("price overflow".into()))?;
        if scaled % pow != 0 {
            return Err(Error::Precision(format!(
                "price {} not representable at tick scale {tick_scale}",
                self.format()
            )));
        }
        Ok((scaled / pow) as u64)
    }

    /// Canonical 2-decimal formatting.
    pub fn format(&self) -> String {
        let pow = 10i64.pow(self.scale);
        if self.scale == 0 {
            format!("{}.00", self.units)
        } else {
            let whole = self.units / pow;
            let frac = (self.units % pow) as u64;
            let s = format!("{:0width$}", frac, width = self.scale as usize);
            let mut s = format!("{whole}.{s}");
            // normalize to at least 2 decimal places
            let dot = s.find('.').unwrap();
            while s.len() - dot - 1 < 2 {
                s.push('0');
            }
            s
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTrade {
    pub timestamp: NaiveDateTime,
    pub price: PriceDecimal,
    pub volume: u64,
    pub exchange: String,
    pub sale_condition: String,
    pub correction: i64,
    pub suffix: String,
}

pub type CleanTrade = RawTrade;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimestampFormat {
    /// ISO-8601 date-time with optional fractional seconds.
    Iso8601,
    /// TAQ HHMMSSxxxxxxxxx (nanosecond suffix); the trade date comes from
    /// `FormatSpec::base_date`.
    TaqHms,
}

#[derive(Debug, Clone)]
pub struct FormatSpec {
    pub delimiter: u8,
    pub timestamp_format: TimestampFormat,
    pub base_date: NaiveDate,
    /// Parsing aborts when more than this fraction of rows is malformed.
    pub max_malformed_fraction: f64,
}

impl Default for FormatSpec {
    fn default() -> Self {
        Self {
            delimiter: b',',
            timestamp_format: TimestampFormat::Iso8601,
            base_date: NaiveDate::from_ymd_opt(1970, 1, 1).unwrap(),
            max_malformed_fraction: 0.05,
        }
    }
}

fn parse_timestamp(s: &str, spec: &FormatSpec) -> Result<NaiveDateTime> {
    let s = s.trim();
    match spec.timestamp_format {
        TimestampFormat::Iso8601 => {
            for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
                if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
                    return Ok(dt);
                }
            }
            Err(Error::Format(format!("unparseable timestamp '{s}'")))
        }
        TimestampFormat::TaqHms => {
            if s.len() < 6 || !s.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::Format(format!("unparseable TAQ timestamp '{s}'")));
            }
            let h: u32 = s[0..2].parse().unwrap();
            let m: u32 = s[2..4].parse().unwrap();
            let sec: u32 = s[4..6].parse().unwrap();
            let frac = &s[6..];
            let nanos: u32 = if frac.is_empty() {
                0
            } else {
                let padded = format!("{frac:0<9}");
                padded[..9].parse().unwrap()
            };
            let time = NaiveTime::from_hms_nano_opt(h, m, sec, nanos)
                .ok_or_else(|| Error::Format(format!("invalid time '{s}'")))?;
            Ok(spec.base_date.and_time(time))
        }
    }
}

#[derive(Debug, Clone)]
pub struct MalformedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct ParseOutcome {
    pub trades: Vec<RawTrade>,
    pub malformed: Vec<MalformedRow>,
}

const REQUIRED_COLUMNS: [&str; 7] = [
    "timestamp",
    "price",
    "size",
    "exchange",
    "condition",
    "correction",
    "suffix",
];

/// Parse delimiter-separated trade records with a header row. Malformed
/// rows are collected, not fatal, unless they exceed the configured
/// fraction.
pub fn parse_trades<R: Read>(input: R, spec: &FormatSpec) -> Result<ParseOutcome> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(spec.delimiter)
        .flexible(true)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 7];
    for (i, name) in REQUIRED_COLUMNS.iter().enumerate() {
        idx[i] = headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Format(format!("missing required column '{name}'")))?;
    }

    let mut trades = Vec::new();
    let mut malformed = Vec::new();
    let mut total = 0usize;
    for (row_no, record) in rdr.records().enumerate() {
        total += 1;
        let line = row_no + 2; // header is line 1
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                malformed.push(MalformedRow { line, reason: e.to_string() });
                continue;
            }
        };
        let field = |i: usize| record.get(idx[i]).unwrap_or("").trim().to_string();
        let parsed = (|| -> Result<RawTrade> {
            Ok(RawTrade {
                timestamp: parse_timestamp(&field(0), spec)?,
                price: PriceDecimal::parse(&field(1))?,
                volume: field(2)
                    .parse()
                    .map_err(|_| Error::Format(format!("bad size '{}'", field(2))))?,
                exchange: field(3),
                sale_condition: field(4),
                correction: if field(5).is_empty() {
                    0
                } else {
                    field(5)
                        .parse()
                        .map_err(|_| Error::Format(format!("bad correction '{}'", field(5))))?
                },
                suffix: field(6),
            })
        })();
        match parsed {
            Ok(t) => trades.push(t),
            Err(e) => malformed.push(MalformedRow { line, reason: e.to_string() }),
        }
    }
    if total > 0 && malformed.len() as f64 / total as f64 > spec.max_malformed_fraction {
        return Err(Error::Format(format!(
            "{} of {} rows malformed (limit {:.1}%)",
            malformed.len(),
            total,
            100.0 * spec.max_malformed_fraction
        )));
    }
    Ok(ParseOutcome { trades, malformed })
}

#[derive(Debug, Clone)]
pub struct CleanConfig {
    /// Closed interval of retained trade times.
    pub hours_open: NaiveTime,
    pub hours_close: NaiveTime,
    /// Outlier threshold in mean absolute deviations.
    pub mad_k: f64,
    /// Rolling centered median window.
    pub median_window: usize,
    /// Minimum observations before the outlier rule activates.
    pub min_window: usize,
    /// Sale conditions retained by rule (v).
    pub retained_conditions: Vec<String>,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            hours_open: NaiveTime::from_hms_opt(9, 30, 0).unwrap(),
            hours_close: NaiveTime::from_hms_opt(16, 0, 0).unwrap(),
            mad_k: 10.0,
            median_window: 50,
            min_window: 10,
            retained_conditions: vec!["".into(), "@".into(), "E".into(), "F".into()],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input: usize,
    pub dropped_suffix: usize,
    pub dropped_hours: usize,
    pub dropped_zero_price: usize,
    pub dropped_off_exchange: usize,
    pub dropped_corrected: usize,
    pub dropped_condition: usize,
    pub dropped_outlier: usize,
    pub dropped_duplicate: usize,
    pub retained: usize,
}

impl CleaningReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped_suffix
            + self.dropped_hours
            + self.dropped_zero_price
            + self.dropped_off_exchange
            + self.dropped_corrected
            + self.dropped_condition
            + self.dropped_outlier
            + self.dropped_duplicate
    }
}

fn median_of(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Rolling centered median/MAD outlier flags. The window excludes the
/// observation under test; series edges use the available asymmetric
/// window and the rule only activates once `min_window` neighbors exist.
fn outlier_flags(prices: &[f64], cfg: &CleanConfig) -> Vec<bool> {
    let n = prices.len();
    let half = cfg.median_window / 2;
    let mut flags = vec![false; n];
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let window: Vec<f64> = (lo..=hi).filter(|&j| j != i).map(|j| prices[j]).collect();
        if window.len() < cfg.min_window {
            continue;
        }
        let med = median_of(window.clone());
        let mad = window.iter().map(|x| (x - med).abs()).sum::<f64>() / window.len() as f64;
        if (prices[i] - med).abs() > cfg.mad_k * mad {
            flags[i] = true;
        }
    }
    flags
}

/// Apply the cleaning rules in order, tallying every drop.
pub fn clean(
    trades: &[RawTrade],
    primary_exchange: &str,
    cfg: &CleanConfig,
) -> (Vec<CleanTrade>, CleaningReport) {
    let mut report = CleaningReport { input: trades.len(), ..Default::default() };

    let mut sorted: Vec<&RawTrade> = trades.iter().collect();
    sorted.sort_by_key(|t| t.timestamp);

    let mut kept: Vec<&RawTrade> = Vec::with_capacity(sorted.len());
    for t in sorted {
        if !t.suffix.trim().is_empty() {
            report.dropped_suffix += 1;
        } else if t.timestamp.time() < cfg.hours_open || t.timestamp.time() > cfg.hours_close {
            report.dropped_hours += 1;
        } else if t.price.units == 0 {
            report.dropped_zero_price += 1;
        } else if t.exchange != primary_exchange {
            report.dropped_off_exchange += 1;
        } else if t.correction != 0 {
            report.dropped_corrected += 1;
        } else if !cfg
            .retained_conditions
            .iter()
            .any(|c| c == t.sale_condition.trim())
        {
            report.dropped_condition += 1;
        } else {
            kept.push(t);
        }
    }

    // rule (vi): rolling median/MAD outliers
    let prices: Vec<f64> = kept.iter().map(|t| t.price.to_f64()).collect();
    let flags = outlier_flags(&prices, cfg);
    let mut survivors: Vec<&RawTrade> = Vec::with_capacity(kept.len());
    for (t, &flag) in kept.iter().zip(&flags) {
        if flag {
            report.dropped_outlier += 1;
        } else {
            survivors.push(t);
        }
    }

    // rule (vii): same-timestamp duplicates collapse to the modal price,
    // ties to the lowest price; the first trade at that price survives
    let mut out: Vec<CleanTrade> = Vec::with_capacity(survivors.len());
    let mut i = 0;
    while i < survivors.len() {
        let mut j = i;
        while j + 1 < survivors.len() && survivors[j + 1].timestamp == survivors[i].timestamp {
            j += 1;
        }
        if j == i {
            out.push(survivors[i].clone());
        } else {
            let group = &survivors[i..=j];
            let mut counts: Vec<(PriceDecimal, usize)> = Vec::new();
            for t in group {
                match counts.iter_mut().find(|(p, _)| *p == t.price) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((t.price, 1)),
                }
            }
            let (mode_price, _) = *counts
                .iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .unwrap();
            let survivor = group.iter().find(|t| t.price == mode_price).unwrap();
            out.push((*survivor).clone());
            report.dropped_duplicate += group.len() - 1;
        }
        i = j + 1;
    }

    report.retained = out.len();
    debug_assert_eq!(report.dropped_total() + report.retained, report.input);
    (out, report)
}

/// Integer-tick series with durations. Durations are gaps to the
/// previous retained trade; each calendar day starts a new conditioning
/// segment whose first duration is a placeholder never consumed by the
/// filter.
pub fn to_tick_series(clean: &[CleanTrade], tick_scale: u64) -> Result<TickSeries> {
    if clean.is_empty() {
        return Err(Error::Domain("no trades to convert".into()));
    }
    let mut y = Vec::with_capacity(clean.len());
    let mut z = Vec::with_capacity(clean.len());
    let mut v = Vec::with_capacity(clean.len());
    let mut timestamps = Vec::with_capacity(clean.len());
    let mut day_starts = Vec::new();
    let mut prev: Option<&CleanTrade> = None;
    for (i, t) in clean.iter().enumerate() {
        y.push(t.price.to_ticks(tick_scale)?);
        v.push(t.volume as f64);
        let epoch = t
            .timestamp
            .and_utc()
            .timestamp_nanos_opt()
            .ok_or_else(|| Error::Format("timestamp out of range".into()))? as f64
            / 1e9;
        timestamps.push(epoch);
        let new_day = match prev {
            None => true,
            Some(p) => p.timestamp.date() != t.timestamp.date(),
        };
        if new_day {
            day_starts.push(i);
            z.push(1.0); // placeholder; the first tick of a day is burn-in
        } else {
            let p = prev.unwrap();
            let dt = (t.timestamp - p.timestamp).num_nanoseconds().unwrap() as f64 / 1e9;
            if dt <= 0.0 {
                return Err(Error::Format(format!(
                    "non-increasing timestamps at trade {i}"
                )));
            }
            z.push(dt);
        }
        prev = Some(t);
    }
    TickSeries::with_days(timestamps, y, z, v, day_starts)
}

/// Cleaned trades as delimited text: the raw schema plus integer ticks
/// and durations.
pub fn write_clean_csv<W: std::io::Write>(
    w: W,
    trades: &[CleanTrade],
    tick_scale: u64,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "timestamp",
        "price",
        "size",
        "exchange",
        "condition",
        "correction",
        "suffix",
        "ticks",
        "duration",
    ])?;
    let mut prev: Option<&CleanTrade> = None;
    for t in trades {
        let duration = match prev {
            Some(p) if p.timestamp.date() == t.timestamp.date() => {
                let dt = (t.timestamp - p.timestamp).num_nanoseconds().unwrap() as f64 / 1e9;
                format!("{dt}")
            }
            _ => String::new(),
        };
        wtr.write_record(&[
            t.timestamp.format("%Y-%m-%dT%H:%M:%S%.9f").to_string(),
            t.price.format(),
            t.volume.to_string(),
            t.exchange.clone(),
            t.sale_condition.clone(),
            t.correction.to_string(),
            t.suffix.clone(),
            t.price.to_ticks(tick_scale)?.to_string(),
            duration,
        ])?;
        prev = Some(t);
    }
    wtr.flush()?;
    Ok(())
}

/// Tick series as delimited text: epoch timestamp (seconds, UTC),
/// integer ticks, duration, volume, and a day-start marker.
pub fn write_series_csv<W: std::io::Write>(w: W, ts: &TickSeries) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["timestamp", "ticks", "duration", "volume", "day_start"])?;
    let mut starts = ts.day_starts.iter().peekable();
    for i in 0..ts.y.len() {
        let is_start = starts.peek() == Some(&&i);
        if is_start {
            starts.next();
        }
        wtr.write_record(&[
            format!("{:.9}", ts.timestamps[i]),
            ts.y[i].to_string(),
            format!("{:.9}", ts.z[i]),
            format!("{}", ts.v[i]),
            (is_start as u8).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_series_csv<R: std::io::Read>(r: R) -> Result<TickSeries> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let expect = ["timestamp", "ticks", "duration", "volume", "day_start"];
    if headers.iter().ne(expect) {
        return Err(Error::Format(format!(
            "series header must be {expect:?}, got {headers:?}"
        )));
    }
    let (mut timestamps, mut y, mut z, mut v, mut day_starts) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |j: usize| -> Result<&str> {
            rec.get(j)
                .ok_or_else(|| Error::Format(format!("series row {} truncated", i + 2)))
        };
        let bad = |what: &str| Error::Format(format!("series row {}: bad {what}", i + 2));
        timestamps.push(field(0)?.parse::<f64>().map_err(|_| bad("timestamp"))?);
        y.push(field(1)?.parse::<u64>().map_err(|_| bad("ticks"))?);
        z.push(field(2)?.parse::<f64>().map_err(|_| bad("duration"))?);
        v.push(field(3)?.parse::<f64>().map_err(|_| bad("volume"))?);
        if field(4)?.trim() == "1" {
            day_starts.push(i);
        }
    }
    TickSeries::with_days(timestamps, y, z, v, day_starts)
}
