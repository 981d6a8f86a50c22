//! The end-to-end `report` pipeline and bundle writer.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::json;
use sqv_core::exec::Exec;
use sqv_core::ingest::{self, FetchConfig, Gap, PriceSeries};
use sqv_core::montecarlo::{self, McConfig};
use sqv_core::render::{self, Table};
use sqv_core::{ou, summary, unitroot, variation};

use crate::error::{AtStage, CliError};
use crate::manifest::{sha256_hex, InputSpec, ManifestRecord, RunManifest};

pub const LEG_NAMES: [&str; 3] = ["spot", "num", "den"];

/// A loaded leg with the SHA-256 of the bytes it was read from.
pub struct Leg {
    pub series: PriceSeries,
    pub sha256: String,
}

/// Reads a price file in either kline or normalized layout.
pub fn load_leg(path: &Path) -> Result<Leg, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let symbol = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let series = ingest::read_price_file(bytes.as_slice(), &symbol)
        .map_err(|e| CliError::from(e).with_context(&path.display().to_string()))?;
    Ok(Leg {
        series,
        sha256: sha256_hex(&bytes),
    })
}

impl CliError {
    fn with_context(mut self, ctx: &str) -> Self {
        self.message = format!("{ctx}: {}", self.message);
        self
    }
}

/// Normalized series file contents.
pub fn series_bytes(series: &PriceSeries) -> Vec<u8> {
    let mut out = Vec::new();
    ingest::write_series(series, &mut out).expect("writing to memory");
    out
}

pub struct Fetched {
    pub symbol: String,
    pub series: PriceSeries,
    pub gaps: Vec<Gap>,
}

/// Downloads `[start, end)` for each symbol, one thread per symbol.
pub fn fetch_symbols(
    symbols: &[String],
    start: i64,
    end: i64,
    endpoint: &str,
    cfg: &FetchConfig,
) -> Result<Vec<Fetched>, CliError> {
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = symbols
            .iter()
            .map(|sym| {
                s.spawn(move || ingest::fetch_klines(sym, "1m", start, end, endpoint, cfg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fetch thread")).collect()
    });
    symbols
        .iter()
        .zip(results)
        .map(|(sym, r)| {
            let out = r.map_err(|e| CliError::from(e).with_context(sym))?;
            Ok(Fetched {
                symbol: sym.clone(),
                series: out.series,
                gaps: out.gaps,
            })
        })
        .collect()
}

pub fn fetch_config(pacing_ms: u64, max_retries: u32) -> FetchConfig {
    FetchConfig {
        pacing: Duration::from_millis(pacing_ms),
        max_retries,
        ..FetchConfig::default()
    }
}

/// Runs `f` on a rayon pool of `workers` threads, or the global pool.
pub fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, CliError> {
    match workers {
        Some(0) => Err(CliError::usage("worker count must be >= 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::usage(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Text and CSV files start with this line; JSON files carry the same hash
/// in a `manifest_sha256` field.
pub fn hash_line(hash: &str) -> String {
    format!("# manifest_sha256={hash}\n")
}

/// Writes `<name>.txt`, `<name>.csv` and `<name>.json` into `dir`.
pub fn write_table(dir: &Path, table: &Table, hash: &str) -> Result<Vec<String>, CliError> {
    let stem = table.name;
    let json = json!({ "manifest_sha256": hash, "table": table.json });
    let files = [
        (format!("{stem}.txt"), format!("{}{}", hash_line(hash), table.text)),
        (format!("{stem}.csv"), format!("{}{}", hash_line(hash), table.csv)),
        (
            format!("{stem}.json"),
            serde_json::to_string_pretty(&json)? + "\n",
        ),
    ];
    let mut names = Vec::new();
    for (name, body) in files {
        fs::write(dir.join(&name), body)?;
        names.push(name);
    }
    Ok(names)
}

/// A written report bundle.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub manifest_sha256: String,
    /// File names inside `dir`, in write order.
    pub files: Vec<String>,
}

/// Runs align, variation, summary, the three Dickey-Fuller tests, the OU fit
/// and (unless skipped) the Monte Carlo stage, then writes the bundle.
///
/// Nothing is written unless every stage succeeds.
pub fn run_report(m: &RunManifest) -> Result<Bundle, CliError> {
    with_workers(m.workers, || run_stages(m))?
}

fn run_stages(m: &RunManifest) -> Result<Bundle, CliError> {
    let mut fetched_files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut gaps: BTreeMap<&str, Vec<Gap>> = BTreeMap::new();
    let legs: Vec<Leg> = match &m.inputs {
        InputSpec::Files { spot, num, den } => [spot, num, den]
            .into_iter()
            .map(|p| load_leg(p))
            .collect::<Result<_, _>>()
            .at("input")?,
        InputSpec::Fetch {
            symbols,
            start_ms,
            end_ms,
            endpoint,
            pacing_ms,
            max_retries,
        } => {
            let cfg = fetch_config(*pacing_ms, *max_retries);
            fetch_symbols(symbols, *start_ms, *end_ms, endpoint, &cfg)
                .at("fetch")?
                .into_iter()
                .map(|f| {
                    let bytes = series_bytes(&f.series);
                    let sha256 = sha256_hex(&bytes);
                    fetched_files.push((format!("{}.csv", f.symbol), bytes));
                    Leg {
                        series: f.series,
                        sha256,
                    }
                })
                .collect()
        }
    };
    for (name, leg) in LEG_NAMES.iter().zip(&legs) {
        gaps.insert(name, leg.series.gaps());
    }

    let triple = variation::align(&legs[0].series, &legs[1].series, &legs[2].series).at("align")?;
    let series = variation::compute_variation(&triple).at("variation")?;
    let summary = summary::summarize(&series, m.epoch_start_ms, m.n_years).at("summary")?;
    let dfs = unitroot::df_test_all(&series, m.df_level, Exec::default()).at("dftest")?;
    let fit = ou::mle_fit(series.values(), m.dt).at("fit")?;
    let ci = match &m.monte_carlo {
        Some(mc) => {
            let cfg = McConfig {
                replications: mc.replications,
                path_length: mc.path_length.unwrap_or(series.len()),
                dt: m.dt,
                confidence: mc.confidence,
                master_seed: mc.master_seed,
                initial_value: mc.initial_value,
            };
            let dist = montecarlo::sampling_distribution(&fit.params, &cfg).at("montecarlo")?;
            Some(montecarlo::confidence_intervals(&dist, mc.confidence, &fit.params).at("montecarlo")?)
        }
        None => None,
    };

    let record = ManifestRecord {
        manifest: m,
        input_sha256: LEG_NAMES
            .iter()
            .zip(&legs)
            .map(|(name, leg)| (*name, leg.sha256.clone()))
            .collect(),
    };
    let manifest_bytes = record.to_bytes();
    let hash = sha256_hex(&manifest_bytes);

    let mut tables = vec![
        render::percentile_table(&summary.overall, summary.count),
        render::yearwise_table(&summary),
        render::iqr_table(&summary),
        render::df_table(&dfs, true),
        render::fit_table(&fit),
    ];
    if let Some(ci) = &ci {
        tables.push(render::ci_table(ci));
    }

    let dir = &m.output_dir;
    let write = || -> Result<Vec<String>, CliError> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        if !fetched_files.is_empty() {
            fs::create_dir_all(dir.join("data"))?;
            for (name, bytes) in &fetched_files {
                fs::write(dir.join("data").join(name), bytes)?;
                files.push(format!("data/{name}"));
            }
        }
        fs::write(dir.join("manifest.json"), &manifest_bytes)?;
        fs::write(dir.join("manifest.sha256"), format!("{hash}  manifest.json\n"))?;
        files.extend(["manifest.json".to_string(), "manifest.sha256".to_string()]);

        let gap_json: BTreeMap<&str, Vec<_>> = gaps
            .iter()
            .map(|(k, v)| {
                let rows = v
                    .iter()
                    .map(|g| json!({ "first_missing_ms": g.first_missing, "missing_minutes": g.missing }))
                    .collect();
                (*k, rows)
            })
            .collect();
        let diagnostics = json!({
            "manifest_sha256": hash,
            "aligned_points": triple.len(),
            "dropped": {
                "spot": triple.dropped.spot,
                "num": triple.dropped.num,
                "den": triple.dropped.den,
            },
            "input_points": {
                "spot": legs[0].series.len(),
                "num": legs[1].series.len(),
                "den": legs[2].series.len(),
            },
            "gaps": gap_json,
        });
        fs::write(
            dir.join("diagnostics.json"),
            serde_json::to_string_pretty(&diagnostics)? + "\n",
        )?;
        files.push("diagnostics.json".into());

        let mut combined = hash_line(&hash);
        for t in &tables {
            files.extend(write_table(dir, t, &hash)?);
            combined.push('\n');
            combined.push_str(&format!("[{}]\n", t.name));
            combined.push_str(&t.text);
        }
        fs::write(dir.join("report.txt"), combined)?;
        files.push("report.txt".into());
        Ok(files)
    };
    let files = write().at("write")?;
    Ok(Bundle {
        dir: dir.clone(),
        manifest_sha256: hash,
        files,
    })
}
