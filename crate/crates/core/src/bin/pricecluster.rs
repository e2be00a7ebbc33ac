//! Batch frontend for the price-clustering pipeline:
//! clean -> simulate/fit -> daily -> report. Every command writes its
//! outputs atomically into --out-dir together with a manifest recording
//! the inputs, the resolved configuration, the seed, and content hashes
//! of everything read and written, so a run can be replayed bit-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use pricecluster::daily_analysis::{
    build_daily_panel, coefficient_table, fe_regression, univariate_line, write_panel_csv,
    ModelSpec,
};
use pricecluster::dynamics::{simulate, ExogenousPolicy, StaticParams, TickSeries};
use pricecluster::estimation::{fit_mle, summarize_fit, FitConfig, ModelVariant};
use pricecluster::ingestion::{
    clean, parse_trades, read_series_csv, to_tick_series, write_clean_csv, write_series_csv,
    CleanConfig, FormatSpec, TimestampFormat,
};
use pricecluster::Error;

#[derive(Parser)]
#[command(name = "pricecluster", version, about = "Dynamic price-clustering model pipeline")]
struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker-pool size; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Key-value config file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply the cleaning protocol to a raw trade file.
    Clean(CleanArgs),
    /// Simulate a tick series from the dynamic model.
    Simulate(SimulateArgs),
    /// Fit model variants to a tick series by conditional ML.
    Fit(FitArgs),
    /// Build the daily panel and run the fixed-effects regressions.
    Daily(DailyArgs),
    /// Descriptive statistics for tick series.
    Report(ReportArgs),
}

#[derive(Args)]
struct CleanArgs {
    /// Raw delimited trade file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Primary listing exchange code.
    #[arg(long)]
    primary_exchange: Option<String>,
    /// Trading hours as HH:MM-HH:MM.
    #[arg(long)]
    hours: Option<String>,
    /// Outlier threshold in mean absolute deviations.
    #[arg(long)]
    mad_k: Option<f64>,
    /// Rolling centered median window.
    #[arg(long)]
    median_window: Option<usize>,
    /// Ticks per currency unit.
    #[arg(long)]
    tick_scale: Option<u64>,
    /// Timestamp format: iso or taq.
    #[arg(long)]
    timestamp_format: Option<String>,
    /// Trade date for taq timestamps, YYYY-MM-DD.
    #[arg(long)]
    base_date: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of ticks.
    #[arg(long)]
    n: Option<usize>,
    /// Initial price in ticks.
    #[arg(long)]
    y0: Option<u64>,
    /// Number of trading days to split the series into.
    #[arg(long)]
    days: Option<usize>,
    /// JSON file with the static parameters; defaults to a reference set.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output file stem.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct FitArgs {
    /// Tick-series CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Variant: none, static, dynamic, or all.
    #[arg(long)]
    variant: Option<String>,
    /// Number of optimization starts.
    #[arg(long)]
    starts: Option<usize>,
    /// Ticks per currency unit (for the summary in currency).
    #[arg(long)]
    tick_scale: Option<u64>,
}

#[derive(Args)]
struct DailyArgs {
    /// Tick-series CSVs, one per stock; the file stem names the stock.
    #[arg(long, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Ticks per currency unit.
    #[arg(long)]
    tick_scale: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Tick-series CSVs, one per stock.
    #[arg(long, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Ticks per currency unit.
    #[arg(long)]
    tick_scale: Option<u64>,
}

/// Flat key-value config file: `key = value` per line, `#` comments.
fn load_config(path: &Path) -> Result<BTreeMap<String, String>, Error> {
    let text = fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Format(format!("config line {}: expected key = value", lineno + 1))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Resolution order for every option: CLI flag, then config file, then
/// built-in default.
struct Resolver {
    config: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    fn new(config: BTreeMap<String, String>) -> Self {
        Self { config, resolved: BTreeMap::new() }
    }

    fn get<T: std::str::FromStr + ToString>(
        &mut self,
        key: &str,
        cli: Option<T>,
        default: T,
    ) -> Result<T, Error> {
        let val = match cli {
            Some(v) => v,
            None => match self.config.get(key) {
                Some(raw) => raw
                    .parse()
                    .map_err(|_| Error::Format(format!("config key {key}: bad value {raw}")))?,
                None => default,
            },
        };
        self.resolved.insert(key.to_string(), val.to_string());
        Ok(val)
    }

    fn get_opt(&mut self, key: &str, cli: Option<String>) -> Option<String> {
        let val = cli.or_else(|| self.config.get(key).cloned());
        if let Some(v) = &val {
            self.resolved.insert(key.to_string(), v.clone());
        }
        val
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

/// Collects artifacts, writes each atomically, and records hashes.
struct Workspace {
    out_dir: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl Workspace {
    fn new(out_dir: PathBuf) -> Result<Self, Error> {
        fs::create_dir_all(&out_dir)?;
        Ok(Self { out_dir, inputs: BTreeMap::new(), outputs: BTreeMap::new() })
    }

    fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, Error> {
        let bytes = fs::read(path)?;
        self.inputs
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn write_output(&mut self, name: &str, bytes: &[u8]) -> Result<(), Error> {
        let path = self.out_dir.join(name);
        let tmp = self.out_dir.join(format!("{name}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn write_manifest(
        &mut self,
        command: &str,
        seed: u64,
        jobs: usize,
        resolved: &BTreeMap<String, String>,
    ) -> Result<(), Error> {
        let manifest = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "jobs": jobs,
            "config": resolved,
            "config_hash": sha256_hex(
                serde_json::to_string(resolved).unwrap().as_bytes()
            ),
            "inputs": self.inputs,
            "outputs": self.outputs,
        });
        let bytes = serde_json::to_vec_pretty(&manifest)?;
        self.write_output(&format!("manifest_{command}.json"), &bytes)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = match &cli.config {
        Some(p) => load_config(p)?,
        None => BTreeMap::new(),
    };
    let mut res = Resolver::new(config);
    let seed = res.get("seed", cli.seed, 20200102u64)?;
    let out_dir = match cli.out_dir {
        Some(p) => p,
        None => PathBuf::from(res.get_opt("out-dir", None).unwrap_or_else(|| ".".into())),
    };
    res.resolved.insert("out-dir".into(), out_dir.display().to_string());
    let jobs = res.get("jobs", cli.jobs, 0usize)?;
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Estimation(format!("thread pool: {e}")))?;
    }
    let mut ws = Workspace::new(out_dir)?;

    match cli.command {
        Command::Clean(args) => cmd_clean(args, &mut res, &mut ws, seed, jobs),
        Command::Simulate(args) => cmd_simulate(args, &mut res, &mut ws, seed, jobs),
        Command::Fit(args) => cmd_fit(args, &mut res, &mut ws, seed, jobs),
        Command::Daily(args) => cmd_daily(args, &mut res, &mut ws, seed, jobs),
        Command::Report(args) => cmd_report(args, &mut res, &mut ws, seed, jobs),
    }
}

fn cmd_clean(
    args: CleanArgs,
    res: &mut Resolver,
    ws: &mut Workspace,
    seed: u64,
    jobs: usize,
) -> Result<(), Error> {
    let input = res
        .get_opt("input", args.input.map(|p| p.display().to_string()))
        .ok_or_else(|| Error::InvalidParameter("clean requires --input".into()))?;
    let exchange = res
        .get_opt("primary-exchange", args.primary_exchange)
        .unwrap_or_else(|| "N".into());
    res.resolved.insert("primary-exchange".into(), exchange.clone());
    let hours = res
        .get_opt("hours", args.hours)
        .unwrap_or_else(|| "09:30-16:00".into());
    let mad_k = res.get("mad-k", args.mad_k, 10.0f64)?;
    let median_window = res.get("median-window", args.median_window, 50usize)?;
    let tick_scale = res.get("tick-scale", args.tick_scale, 100u64)?;
    let ts_format = res
        .get_opt("timestamp-format", args.timestamp_format)
        .unwrap_or_else(|| "iso".into());
    let base_date = res
        .get_opt("base-date", args.base_date)
        .unwrap_or_else(|| "1970-01-01".into());

    let (open, close) = hours
        .split_once('-')
        .ok_or_else(|| Error::Format("hours must be HH:MM-HH:MM".into()))?;
    let parse_hm = |s: &str| {
        chrono::NaiveTime::parse_from_str(s.trim(), "%H:%M")
            .map_err(|_| Error::Format(format!("bad time {s}")))
    };
    let mut cfg = CleanConfig::default();
    cfg.hours_open = parse_hm(open)?;
    cfg.hours_close = parse_hm(close)?;
    cfg.mad_k = mad_k;
    cfg.median_window = median_window;

    let mut spec = FormatSpec::default();
    spec.timestamp_format = match ts_format.as_str() {
        "iso" => TimestampFormat::Iso8601,
        "taq" => TimestampFormat::TaqHms,
        other => return Err(Error::Format(format!("unknown timestamp format {other}"))),
    };
    spec.base_date = chrono::NaiveDate::parse_from_str(&base_date, "%Y-%m-%d")
        .map_err(|_| Error::Format(format!("bad base date {base_date}")))?;

    let raw = ws.read_input(Path::new(&input))?;
    let outcome = parse_trades(&raw[..], &spec)?;
    for m in &outcome.malformed {
        eprintln!("skipping malformed row {}: {}", m.line, m.reason);
    }
    let (cleaned, report) = clean(&outcome.trades, &exchange, &cfg);

    let mut buf = Vec::new();
    write_clean_csv(&mut buf, &cleaned, tick_scale)?;
    ws.write_output("cleaned.csv", &buf)?;
    ws.write_output(
        "cleaning_report.json",
        &serde_json::to_vec_pretty(&report)?,
    )?;
    if !cleaned.is_empty() {
        let ts = to_tick_series(&cleaned, tick_scale)?;
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &ts)?;
        ws.write_output("series.csv", &buf)?;
    }
    ws.write_manifest("clean", seed, jobs, &res.resolved.clone())
}

fn reference_params() -> StaticParams {
    StaticParams {
        c: 5.00,
        b: 0.09,
        a: 0.30,
        d: -0.29,
        f: 0.39,
        g1: -0.14,
        g2: 0.18,
        g3: 0.03,
        g4: -0.71,
        h5: 0.010,
        h10: 0.030,
    }
}

fn cmd_simulate(
    args: SimulateArgs,
    res: &mut Resolver,
    ws: &mut Workspace,
    seed: u64,
    jobs: usize,
) -> Result<(), Error> {
    let n = res.get("n", args.n, 10_000usize)?;
    let y0 = res.get("y0", args.y0, 10_013u64)?;
    let name = res
        .get_opt("name", args.name)
        .unwrap_or_else(|| "sim".into());
    res.resolved.insert("name".into(), name.clone());
    let theta = match res.get_opt("params", args.params.map(|p| p.display().to_string())) {
        Some(path) => {
            let bytes = ws.read_input(Path::new(&path))?;
            serde_json::from_slice::<StaticParams>(&bytes)?
        }
        None => reference_params(),
    };
    theta.validate()?;
    let days = res.get("days", args.days, 1usize)?.max(1);
    let ts = simulate(&theta, &ExogenousPolicy::default(), y0, seed, n)?;
    let ts = if days > 1 {
        split_into_days(ts, days)?
    } else {
        ts
    };
    let mut buf = Vec::new();
    write_series_csv(&mut buf, &ts)?;
    ws.write_output(&format!("{name}_series.csv"), &buf)?;
    ws.write_output(
        &format!("{name}_params.json"),
        &serde_json::to_vec_pretty(&theta)?,
    )?;
    ws.write_manifest("simulate", seed, jobs, &res.resolved.clone())
}

/// Reinterprets a single-day simulated series as `days` consecutive
/// sessions of roughly equal length, shifting timestamps so each
/// session falls on its own calendar date.
fn split_into_days(ts: TickSeries, days: usize) -> Result<TickSeries, Error> {
    let n = ts.y.len();
    if days * 3 > n {
        return Err(Error::InvalidParameter(
            "each day needs at least 3 ticks".into(),
        ));
    }
    let per = n / days;
    let day_starts: Vec<usize> = (0..days).map(|d| d * per).collect();
    let mut timestamps = ts.timestamps.clone();
    for (d, start) in day_starts.iter().enumerate() {
        let end = if d + 1 < days { day_starts[d + 1] } else { n };
        let base = timestamps[*start];
        for i in *start..end {
            timestamps[i] = timestamps[i] - base + d as f64 * 86_400.0;
        }
    }
    TickSeries::with_days(timestamps, ts.y, ts.z, ts.v, day_starts)
}

fn cmd_fit(
    args: FitArgs,
    res: &mut Resolver,
    ws: &mut Workspace,
    seed: u64,
    jobs: usize,
) -> Result<(), Error> {
    let input = res
        .get_opt("input", args.input.map(|p| p.display().to_string()))
        .ok_or_else(|| Error::InvalidParameter("fit requires --input".into()))?;
    let variant_arg = res
        .get_opt("variant", args.variant)
        .unwrap_or_else(|| "all".into());
    res.resolved.insert("variant".into(), variant_arg.clone());
    let starts = res.get("starts", args.starts, 5usize)?;
    let tick_scale = res.get("tick-scale", args.tick_scale, 100u64)?;

    let bytes = ws.read_input(Path::new(&input))?;
    let ts = read_series_csv(&bytes[..])?;
    let variants: Vec<ModelVariant> = match variant_arg.as_str() {
        "all" => vec![
            ModelVariant::NoClustering,
            ModelVariant::StaticClustering,
            ModelVariant::DynamicClustering,
        ],
        one => vec![one.parse()?],
    };

    let cfg = FitConfig { n_starts: starts, seed, ..FitConfig::default() };
    let mut comparison = String::from("variant,n_params,loglik_avg,aic\n");
    let mut summary = String::from(
        "variant,mu_bar,alpha_bar,phi1_bar_pct,phi5_bar_pct,phi10_bar_pct\n",
    );
    for variant in variants {
        let fr = fit_mle(&ts, variant, &cfg)?;
        ws.write_output(
            &format!("fit_{}.json", variant.name()),
            &serde_json::to_vec_pretty(&fr.report())?,
        )?;
        let mut path_csv = Vec::new();
        fr.path.write_csv(&mut path_csv)?;
        ws.write_output(&format!("path_{}.csv", variant.name()), &path_csv)?;
        comparison.push_str(&format!(
            "{},{},{:.6},{:.4}\n",
            variant.name(),
            variant.n_free(),
            fr.loglik_avg,
            fr.aic
        ));
        let row = summarize_fit(&fr, tick_scale);
        summary.push_str(&format!(
            "{},{:.4},{:.4},{:.2},{:.2},{:.2}\n",
            variant.name(),
            row.mu_bar,
            row.alpha_bar,
            row.phi1_bar_pct,
            row.phi5_bar_pct,
            row.phi10_bar_pct
        ));
    }
    ws.write_output("comparison.csv", comparison.as_bytes())?;
    ws.write_output("summary.csv", summary.as_bytes())?;
    ws.write_manifest("fit", seed, jobs, &res.resolved.clone())
}

fn stock_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "stock".into())
}

fn cmd_daily(
    args: DailyArgs,
    res: &mut Resolver,
    ws: &mut Workspace,
    seed: u64,
    jobs: usize,
) -> Result<(), Error> {
    let inputs: Vec<PathBuf> = if args.inputs.is_empty() {
        res.get_opt("inputs", None)
            .map(|s| s.split_whitespace().map(PathBuf::from).collect())
            .unwrap_or_default()
    } else {
        let joined = args
            .inputs
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(" ");
        res.resolved.insert("inputs".into(), joined);
        args.inputs
    };
    if inputs.is_empty() {
        return Err(Error::InvalidParameter("daily requires --inputs".into()));
    }
    let tick_scale = res.get("tick-scale", args.tick_scale, 100u64)?;

    let mut per_stock = BTreeMap::new();
    for path in &inputs {
        let bytes = ws.read_input(path)?;
        per_stock.insert(stock_name(path), read_series_csv(&bytes[..])?);
    }
    let panel = build_daily_panel(&per_stock, tick_scale)?;
    let mut buf = Vec::new();
    write_panel_csv(&mut buf, &panel)?;
    ws.write_output("panel.csv", &buf)?;

    // Table-shaped coefficient comparison across the three models, when
    // the panel is large enough to identify them
    let specs = [ModelSpec::ModelI, ModelSpec::ModelII, ModelSpec::ModelIII];
    let mut fits = Vec::new();
    for spec in specs {
        match fe_regression(&panel, spec) {
            Ok(fit) => fits.push(fit),
            Err(e) => eprintln!("skipping {spec:?}: {e}"),
        }
    }
    if !fits.is_empty() {
        ws.write_output("coefficients.csv", coefficient_table(&fits).as_bytes())?;
        for fit in &fits {
            ws.write_output(
                &format!("fit_panel_{:?}.json", fit.model).to_lowercase(),
                &serde_json::to_vec_pretty(fit)?,
            )?;
        }
    }

    // scatter + fitted line per covariate from univariate panel regressions
    for cov in ["price", "volatility", "duration", "volume"] {
        let line = univariate_line(&panel, cov);
        let (slope, intercept) = match line {
            Ok(v) => v,
            Err(e) => {
                eprintln!("skipping scatter for {cov}: {e}");
                continue;
            }
        };
        let mut out = String::from("stock,day,x,pc,fitted\n");
        for r in panel.iter().filter(|r| r.rk_vol > 0.0) {
            let x = match cov {
                "price" => r.mean_price.ln(),
                "volatility" => r.rk_vol.ln(),
                "duration" => r.mean_duration.ln(),
                _ => r.mean_volume.ln(),
            };
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                r.stock,
                r.day,
                x,
                r.pc,
                intercept + slope * x
            ));
        }
        ws.write_output(&format!("scatter_{cov}.csv"), out.as_bytes())?;
    }

    // per-final-digit breakdown across all stocks
    let digits = digit_breakdown(per_stock.values());
    ws.write_output("digit_breakdown.csv", digits.as_bytes())?;
    ws.write_manifest("daily", seed, jobs, &res.resolved.clone())
}

/// Relative frequency and mean squared tick change, duration, and volume
/// by final tick digit.
fn digit_breakdown<'a, I: Iterator<Item = &'a TickSeries>>(series: I) -> String {
    let mut count = [0usize; 10];
    let mut sqret = [0.0f64; 10];
    let mut sqret_n = [0usize; 10];
    let mut dur = [0.0f64; 10];
    let mut dur_n = [0usize; 10];
    let mut vol = [0.0f64; 10];
    for ts in series {
        for seg in ts.segments() {
            for i in seg.clone() {
                let d = (ts.y[i] % 10) as usize;
                count[d] += 1;
                vol[d] += ts.v[i];
                if i > seg.start {
                    let dy = ts.y[i] as f64 - ts.y[i - 1] as f64;
                    sqret[d] += dy * dy;
                    sqret_n[d] += 1;
                    dur[d] += ts.z[i];
                    dur_n[d] += 1;
                }
            }
        }
    }
    let total: usize = count.iter().sum();
    let mut out = String::from("digit,frequency,mean_sq_change,mean_duration,mean_volume\n");
    for d in 0..10 {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            d,
            count[d] as f64 / total.max(1) as f64,
            sqret[d] / sqret_n[d].max(1) as f64,
            dur[d] / dur_n[d].max(1) as f64,
            vol[d] / count[d].max(1) as f64
        ));
    }
    out
}

fn cmd_report(
    args: ReportArgs,
    res: &mut Resolver,
    ws: &mut Workspace,
    seed: u64,
    jobs: usize,
) -> Result<(), Error> {
    let inputs: Vec<PathBuf> = if args.inputs.is_empty() {
        res.get_opt("inputs", None)
            .map(|s| s.split_whitespace().map(PathBuf::from).collect())
            .unwrap_or_default()
    } else {
        let joined = args
            .inputs
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(" ");
        res.resolved.insert("inputs".into(), joined);
        args.inputs
    };
    if inputs.is_empty() {
        return Err(Error::InvalidParameter("report requires --inputs".into()));
    }
    let tick_scale = res.get("tick-scale", args.tick_scale, 100u64)?;

    let mut out = String::from(
        "stock,n_trades,n_days,mean_price,min_price,max_price,pc,frac_5,frac_10,mean_duration,mean_volume\n",
    );
    for path in &inputs {
        let bytes = ws.read_input(path)?;
        let ts = read_series_csv(&bytes[..])?;
        let n = ts.y.len();
        let mean = ts.y.iter().map(|&y| y as f64).sum::<f64>() / n as f64;
        let min = *ts.y.iter().min().unwrap();
        let max = *ts.y.iter().max().unwrap();
        let frac5 = ts.y.iter().filter(|&&y| y % 5 == 0).count() as f64 / n as f64;
        let frac10 = ts.y.iter().filter(|&&y| y % 10 == 0).count() as f64 / n as f64;
        let mean_dur = ts.z.iter().sum::<f64>() / n as f64;
        let mean_vol = ts.v.iter().sum::<f64>() / n as f64;
        out.push_str(&format!(
            "{},{},{},{:.4},{:.2},{:.2},{:.6},{:.6},{:.6},{:.4},{:.2}\n",
            stock_name(path),
            n,
            ts.day_starts.len(),
            mean / tick_scale as f64,
            min as f64 / tick_scale as f64,
            max as f64 / tick_scale as f64,
            frac5 - 0.2,
            frac5,
            frac10,
            mean_dur,
            mean_vol
        ));
    }
    ws.write_output("report.csv", out.as_bytes())?;
    ws.write_manifest("report", seed, jobs, &res.resolved.clone())
}
