//! Argument parsing and the subcommand implementations.
//!
//! Every setting can come from a flag, an environment variable (where one is
//! defined) or the `--manifest` JSON file, in that order of precedence.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sqv_core::exec::Exec;
use sqv_core::ingest::DEFAULT_ENDPOINT;
use sqv_core::montecarlo::{self, McConfig};
use sqv_core::ou::{self, OUParams};
use sqv_core::render::{self, Table};
use sqv_core::summary::DEFAULT_EPOCH_START_MS;
use sqv_core::variation::{self, VariationSeries};
use sqv_core::{summary, unitroot};

use crate::error::{AtStage, CliError};
use crate::manifest::*;
use crate::report::{self, run_report};

#[derive(Debug, Parser)]
#[command(name = "sqv", version, about = "Spot-quotient variation pipeline")]
pub struct Cli {
    /// JSON file with default settings (flags and environment override it).
    #[arg(long, global = true, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download 1-minute klines and write <symbol>.csv per symbol.
    Fetch(FetchArgs),
    /// Align three price files and write the variation series.
    Variation(VariationArgs),
    /// Percentile, yearwise and IQR tables.
    Summarize(SummarizeArgs),
    /// Dickey-Fuller tests, models (a), (b) and (c).
    Dftest(DftestArgs),
    /// Closed-form OU maximum likelihood fit.
    Fit(FitArgs),
    /// Monte Carlo confidence intervals of the OU parameters.
    Ci(CiArgs),
    /// Simulate an OU path.
    Simulate(SimulateArgs),
    /// Run the full pipeline and write a report bundle.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct LegArgs {
    /// Spot cross-rate prices (kline CSV or normalized series).
    #[arg(long, value_name = "FILE")]
    pub spot: Option<PathBuf>,
    /// Numerator USDT prices.
    #[arg(long, value_name = "FILE")]
    pub num: Option<PathBuf>,
    /// Denominator USDT prices.
    #[arg(long, value_name = "FILE")]
    pub den: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SeriesArgs {
    #[command(flatten)]
    pub legs: LegArgs,
    /// Precomputed variation file; used instead of the three legs.
    #[arg(long, value_name = "FILE")]
    pub variation: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    /// Comma-separated spot, numerator and denominator symbols.
    #[arg(long, value_delimiter = ',')]
    pub symbols: Option<Vec<String>>,
    /// Window start: epoch ms, YYYY-MM-DD or RFC 3339.
    #[arg(long)]
    pub start: Option<String>,
    /// Window end (exclusive).
    #[arg(long)]
    pub end: Option<String>,
    #[arg(long, env = "SQV_ENDPOINT")]
    pub endpoint: Option<String>,
    /// Pause between page requests.
    #[arg(long, env = "SQV_PACING_MS")]
    pub pacing_ms: Option<u64>,
    /// Retries per page after the first attempt.
    #[arg(long)]
    pub max_retries: Option<u32>,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    #[command(flatten)]
    pub window: WindowArgs,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VariationArgs {
    #[command(flatten)]
    pub legs: LegArgs,
    /// Output file.
    #[arg(long, default_value = "variation.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Start of year 1, epoch ms.
    #[arg(long)]
    pub epoch_start_ms: Option<i64>,
    #[arg(long)]
    pub years: Option<usize>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct DftestArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Significance level (only 0.01 is tabulated).
    #[arg(long)]
    pub level: Option<f64>,
    /// Also print tau and the critical values.
    #[arg(long)]
    pub verbose: bool,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Sampling step in model time units.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// Simulated paths (default 1000).
    #[arg(long)]
    pub replications: Option<usize>,
    /// Values per simulated path (default: length of the fitted series).
    #[arg(long)]
    pub path_length: Option<usize>,
    /// Two-sided interval level (default 0.9).
    #[arg(long)]
    pub confidence: Option<f64>,
    /// Master seed of the replication streams.
    #[arg(long, env = "SQV_SEED")]
    pub seed: Option<u64>,
    /// Start of every simulated path (default: fitted mean).
    #[arg(long, allow_hyphen_values = true)]
    pub initial_value: Option<f64>,
    /// Rayon worker threads; results do not depend on it.
    #[arg(long, env = "SQV_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CiArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Simulate from these parameters instead of fitting a series.
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Number of steps; the path has one more value.
    #[arg(long)]
    pub steps: usize,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, env = "SQV_SEED")]
    pub seed: Option<u64>,
    /// Initial value (default: mu).
    #[arg(long, allow_hyphen_values = true)]
    pub v0: Option<f64>,
    /// Output file in variation layout.
    #[arg(long, default_value = "simulated.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub legs: LegArgs,
    /// Fetch the legs for this window instead of reading files.
    #[command(flatten)]
    pub window: WindowArgs,
    /// Sampling step in model time units (default 1).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Start of year 1, epoch ms (default 2017-09-01).
    #[arg(long)]
    pub epoch_start_ms: Option<i64>,
    /// Number of yearly slices (default 4).
    #[arg(long)]
    pub years: Option<usize>,
    /// Dickey-Fuller significance level (default 0.01).
    #[arg(long)]
    pub level: Option<f64>,
    #[command(flatten)]
    pub mc: McArgs,
    /// Leave out the Monte Carlo stage and its table.
    #[arg(long)]
    pub skip_mc: bool,
    /// Bundle directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mf = match &cli.manifest {
        Some(p) => ManifestFile::load(p)?,
        None => ManifestFile::default(),
    };
    match cli.command {
        Command::Fetch(a) => cmd_fetch(a, &mf),
        Command::Variation(a) => cmd_variation(a, &mf),
        Command::Summarize(a) => cmd_summarize(a, &mf),
        Command::Dftest(a) => cmd_dftest(a, &mf),
        Command::Fit(a) => cmd_fit(a, &mf),
        Command::Ci(a) => cmd_ci(a, &mf),
        Command::Simulate(a) => cmd_simulate(a, &mf),
        Command::Report(a) => cmd_report(a, &mf).map(|b| {
            eprintln!(
                "wrote {} files to {} (manifest sha256 {})",
                b.files.len(),
                b.dir.display(),
                b.manifest_sha256
            );
        }),
    }
}

fn emit(tables: &[Table], format: Format) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match format {
        Format::Text => {
            for (i, t) in tables.iter().enumerate() {
                if i > 0 {
                    writeln!(out)?;
                }
                out.write_all(t.text.as_bytes())?;
            }
        }
        Format::Csv => {
            for (i, t) in tables.iter().enumerate() {
                if i > 0 {
                    writeln!(out)?;
                }
                out.write_all(t.csv.as_bytes())?;
            }
        }
        Format::Json => {
            let all: serde_json::Map<String, serde_json::Value> = tables
                .iter()
                .map(|t| (t.name.to_string(), t.json.clone()))
                .collect();
            writeln!(out, "{}", serde_json::to_string_pretty(&all)?)?;
        }
    }
    Ok(())
}

struct Window {
    symbols: [String; 3],
    start: i64,
    end: i64,
    endpoint: String,
    pacing_ms: u64,
    max_retries: u32,
}

fn resolve_window(w: WindowArgs, mf: &ManifestFile) -> Result<Option<Window>, CliError> {
    let start = w.start.or_else(|| mf.start.clone());
    let end = w.end.or_else(|| mf.end.clone());
    let (start, end) = match (start, end) {
        (Some(s), Some(e)) => (parse_time_ms(&s)?, parse_time_ms(&e)?),
        (None, None) => return Ok(None),
        _ => return Err(CliError::usage("both --start and --end are required")),
    };
    let symbols = w
        .symbols
        .or_else(|| mf.symbols.clone())
        .unwrap_or_else(|| DEFAULT_SYMBOLS.map(String::from).to_vec());
    let symbols: [String; 3] = symbols
        .try_into()
        .map_err(|_| CliError::usage("exactly three symbols are required (spot,num,den)"))?;
    Ok(Some(Window {
        symbols,
        start,
        end,
        endpoint: pick(w.endpoint, mf.endpoint.clone(), DEFAULT_ENDPOINT.to_string()),
        pacing_ms: pick(w.pacing_ms, mf.pacing_ms, 100),
        max_retries: pick(w.max_retries, mf.max_retries, 5),
    }))
}

fn resolve_legs(l: LegArgs, mf: &ManifestFile) -> Option<[PathBuf; 3]> {
    match (
        l.spot.or_else(|| mf.spot.clone()),
        l.num.or_else(|| mf.num.clone()),
        l.den.or_else(|| mf.den.clone()),
    ) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    }
}

fn variation_from_legs(paths: &[PathBuf; 3]) -> Result<VariationSeries, CliError> {
    let legs = paths
        .iter()
        .map(|p| report::load_leg(p))
        .collect::<Result<Vec<_>, _>>()
        .at("input")?;
    let triple = variation::align(&legs[0].series, &legs[1].series, &legs[2].series).at("align")?;
    let d = triple.dropped;
    if d.spot + d.num + d.den > 0 {
        eprintln!(
            "warning: alignment dropped {} spot, {} num, {} den timestamps",
            d.spot, d.num, d.den
        );
    }
    variation::compute_variation(&triple).at("variation")
}

fn load_series(s: SeriesArgs, mf: &ManifestFile) -> Result<VariationSeries, CliError> {
    if let Some(p) = s.variation.or_else(|| mf.variation.clone()) {
        let f = fs::File::open(&p)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", p.display())))
            .at("input")?;
        return variation::read_variation(f).at("input");
    }
    match resolve_legs(s.legs, mf) {
        Some(paths) => variation_from_legs(&paths),
        None => Err(CliError::usage(
            "give --variation or all of --spot, --num and --den",
        )),
    }
}

fn cmd_fetch(a: FetchArgs, mf: &ManifestFile) -> Result<(), CliError> {
    let w = resolve_window(a.window, mf)?
        .ok_or_else(|| CliError::usage("fetch needs --start and --end"))?;
    let out = pick(a.out, mf.output_dir.clone(), PathBuf::from("."));
    let cfg = report::fetch_config(w.pacing_ms, w.max_retries);
    let fetched = report::fetch_symbols(&w.symbols, w.start, w.end, &w.endpoint, &cfg).at("fetch")?;
    fs::create_dir_all(&out)?;
    for f in &fetched {
        let path = out.join(format!("{}.csv", f.symbol));
        fs::write(&path, report::series_bytes(&f.series))?;
        for g in &f.gaps {
            eprintln!("warning: {}: {g}", f.symbol);
        }
        if !f.gaps.is_empty() {
            let rows: Vec<_> = f
                .gaps
                .iter()
                .map(|g| json!({ "first_missing_ms": g.first_missing, "missing_minutes": g.missing }))
                .collect();
            fs::write(
                out.join(format!("{}.gaps.json", f.symbol)),
                serde_json::to_string_pretty(&rows)? + "\n",
            )?;
        }
        eprintln!("{}: {} rows -> {}", f.symbol, f.series.len(), path.display());
    }
    Ok(())
}

fn cmd_variation(a: VariationArgs, mf: &ManifestFile) -> Result<(), CliError> {
    let paths = resolve_legs(a.legs, mf)
        .ok_or_else(|| CliError::usage("variation needs --spot, --num and --den"))?;
    let series = variation_from_legs(&paths)?;
    let mut buf = Vec::new();
    variation::write_variation(&series, &mut buf)?;
    fs::write(&a.out, buf)?;
    eprintln!("{} values -> {}", series.len(), a.out.display());
    Ok(())
}

fn cmd_summarize(a: SummarizeArgs, mf: &ManifestFile) -> Result<(), CliError> {
    let epoch = pick(a.epoch_start_ms, mf.epoch_start_ms, DEFAULT_EPOCH_START_MS);
    let years = pick(a.years, mf.n_years, DEFAULT_YEARS);
    let series = load_series(a.series, mf)?;
    let s = summary::summarize(&series, epoch, years).at("summary")?;
    emit(
        &[
            render::percentile_table(&s.overall, s.count),
            render::yearwise_table(&s),
            render::iqr_table(&s),
        ],
        a.format,
    )
}

fn cmd_dftest(a: DftestArgs, mf: &ManifestFile) -> Result<(), CliError> {
    let level = pick(a.level, mf.df_level, DEFAULT_DF_LEVEL);
    let series = load_series(a.series, mf)?;
    let r = unitroot::df_test_all(&series, level, Exec::default()).at("dftest")?;
    emit(&[render::df_table(&r, a.verbose)], a.format)
}

fn cmd_fit(a: FitArgs, mf: &ManifestFile) -> Result<(), CliError> {
    let dt = pick(a.dt, mf.dt, 1.0);
    let series = load_series(a.series, mf)?;
    let fit = ou::mle_fit(series.values(), dt).at("fit")?;
    emit(&[render::fit_table(&fit)], a.format)
}

fn explicit_params(p: &ParamArgs) -> Result<Option<OUParams>, CliError> {
    match (p.alpha, p.mu, p.sigma) {
        (Some(alpha), Some(mu), Some(sigma)) => Ok(Some(OUParams::new(alpha, mu, sigma)?)),
        (None, None, None) => Ok(None),
        _ => Err(CliError::usage("give all of --alpha, --mu and --sigma")),
    }
}

fn mc_config(mc: &McArgs, mf: &ManifestFile, dt: f64, default_len: Option<usize>) -> Result<McConfig, CliError> {
    let path_length = mc
        .path_length
        .or(mf.path_length)
        .or(default_len)
        .ok_or_else(|| CliError::usage("--path-length is required with explicit parameters"))?;
    Ok(McConfig {
        replications: pick(mc.replications, mf.replications, DEFAULT_REPLICATIONS),
        path_length,
        dt,
        confidence: pick(mc.confidence, mf.confidence, DEFAULT_CONFIDENCE),
        master_seed: pick(mc.seed, mf.master_seed, DEFAULT_SEED),
        initial_value: mc.initial_value.or(mf.initial_value),
    })
}

fn cmd_ci(a: CiArgs, mf: &ManifestFile) -> Result<(), CliError> {
    let dt = pick(a.dt, mf.dt, 1.0);
    let (params, n) = match explicit_params(&a.params)? {
        Some(p) => (p, None),
        None => {
            let series = load_series(a.series, mf)?;
            let fit = ou::mle_fit(series.values(), dt).at("fit")?;
            (fit.params, Some(series.len()))
        }
    };
    let cfg = mc_config(&a.mc, mf, dt, n)?;
    let workers = a.mc.workers.or(mf.workers);
    let ci = report::with_workers(workers, || {
        let dist = montecarlo::sampling_distribution(&params, &cfg)?;
        montecarlo::confidence_intervals(&dist, cfg.confidence, &params)
    })?
    .at("montecarlo")?;
    emit(&[render::ci_table(&ci)], a.format)
}

fn cmd_simulate(a: SimulateArgs, mf: &ManifestFile) -> Result<(), CliError> {
    let p = explicit_params(&a.params)?
        .ok_or_else(|| CliError::usage("simulate needs --alpha, --mu and --sigma"))?;
    let dt = pick(a.dt, mf.dt, 1.0);
    let seed = pick(a.seed, mf.master_seed, DEFAULT_SEED);
    let path = ou::simulate_path(&p, a.v0.unwrap_or(p.mu), a.steps, dt, seed)?;
    let series = VariationSeries::from_values(path)?;
    let mut buf = Vec::new();
    variation::write_variation(&series, &mut buf)?;
    write_file(&a.out, &buf)?;
    eprintln!("{} values -> {}", series.len(), a.out.display());
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Builds the run manifest for `report` from flags, environment and file.
pub fn resolve_report(a: ReportArgs, mf: &ManifestFile) -> Result<RunManifest, CliError> {
    let inputs = match (resolve_legs(a.legs, mf), resolve_window(a.window, mf)?) {
        (Some([spot, num, den]), None) => InputSpec::Files { spot, num, den },
        (None, Some(w)) => InputSpec::Fetch {
            symbols: w.symbols,
            start_ms: w.start,
            end_ms: w.end,
            endpoint: w.endpoint,
            pacing_ms: w.pacing_ms,
            max_retries: w.max_retries,
        },
        (Some(_), Some(_)) => {
            return Err(CliError::usage("give either input files or a fetch window, not both"))
        }
        (None, None) => {
            return Err(CliError::usage(
                "report needs --spot/--num/--den or a --start/--end fetch window",
            ))
        }
    };
    let skip_mc = a.skip_mc || mf.skip_mc.unwrap_or(false);
    let monte_carlo = (!skip_mc).then(|| McSettings {
        replications: pick(a.mc.replications, mf.replications, DEFAULT_REPLICATIONS),
        path_length: a.mc.path_length.or(mf.path_length),
        confidence: pick(a.mc.confidence, mf.confidence, DEFAULT_CONFIDENCE),
        master_seed: pick(a.mc.seed, mf.master_seed, DEFAULT_SEED),
        initial_value: a.mc.initial_value.or(mf.initial_value),
    });
    Ok(RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        inputs,
        dt: pick(a.dt, mf.dt, 1.0),
        epoch_start_ms: pick(a.epoch_start_ms, mf.epoch_start_ms, DEFAULT_EPOCH_START_MS),
        n_years: pick(a.years, mf.n_years, DEFAULT_YEARS),
        df_level: pick(a.level, mf.df_level, DEFAULT_DF_LEVEL),
        monte_carlo,
        output_dir: pick(a.out, mf.output_dir.clone(), PathBuf::from("report")),
        workers: a.mc.workers.or(mf.workers),
    })
}

fn cmd_report(a: ReportArgs, mf: &ManifestFile) -> Result<report::Bundle, CliError> {
    let m = resolve_report(a, mf)?;
    run_report(&m)
}
