//! Run manifests: the optional JSON settings file and the fully resolved
//! configuration that every report cites by hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const DEFAULT_SYMBOLS: [&str; 3] = ["ETHBTC", "ETHUSDT", "BTCUSDT"];
pub const DEFAULT_REPLICATIONS: usize = 1000;
pub const DEFAULT_CONFIDENCE: f64 = 0.9;
pub const DEFAULT_SEED: u64 = 20_170_901;
pub const DEFAULT_YEARS: usize = 4;
pub const DEFAULT_DF_LEVEL: f64 = 0.01;

/// Settings read from `--manifest`. Every field is optional; flags and
/// environment variables take precedence.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub spot: Option<PathBuf>,
    pub num: Option<PathBuf>,
    pub den: Option<PathBuf>,
    pub variation: Option<PathBuf>,
    pub symbols: Option<Vec<String>>,
    pub start: Option<String>,
    pub end: Option<String>,
    pub endpoint: Option<String>,
    pub pacing_ms: Option<u64>,
    pub max_retries: Option<u32>,
    pub dt: Option<f64>,
    pub epoch_start_ms: Option<i64>,
    pub n_years: Option<usize>,
    pub df_level: Option<f64>,
    pub replications: Option<usize>,
    pub path_length: Option<usize>,
    pub confidence: Option<f64>,
    pub master_seed: Option<u64>,
    pub initial_value: Option<f64>,
    pub skip_mc: Option<bool>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl ManifestFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&raw)
            .map_err(|e| CliError::usage(format!("bad manifest {}: {e}", path.display())))
    }
}

/// Where the three legs come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum InputSpec {
    Files {
        spot: PathBuf,
        num: PathBuf,
        den: PathBuf,
    },
    Fetch {
        /// Spot, numerator and denominator symbols.
        symbols: [String; 3],
        start_ms: i64,
        end_ms: i64,
        endpoint: String,
        #[serde(skip)]
        pacing_ms: u64,
        #[serde(skip)]
        max_retries: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub replications: usize,
    /// Values per simulated path; the variation length when `None`.
    pub path_length: Option<usize>,
    pub confidence: f64,
    pub master_seed: u64,
    /// Start of each simulated path; the fitted mean when `None`.
    pub initial_value: Option<f64>,
}

/// Fully resolved settings of a `report` run.
///
/// The output directory and worker count do not change any result, so they
/// are left out of the serialized form and of the hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub inputs: InputSpec,
    pub dt: f64,
    pub epoch_start_ms: i64,
    pub n_years: usize,
    pub df_level: f64,
    /// `None` skips the Monte Carlo stage.
    pub monte_carlo: Option<McSettings>,
    #[serde(skip)]
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub workers: Option<usize>,
}

/// The manifest as written into a bundle: settings plus input content hashes.
#[derive(Debug, Serialize)]
pub struct ManifestRecord<'a> {
    #[serde(flatten)]
    pub manifest: &'a RunManifest,
    pub input_sha256: BTreeMap<&'static str, String>,
}

impl ManifestRecord<'_> {
    /// Canonical bytes of `manifest.json`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("manifest serializes");
        out.push(b'\n');
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Flag value, else manifest value, else default. Environment variables are
/// folded into the flag value by the argument parser.
pub fn pick<T>(flag: Option<T>, manifest: Option<T>, default: T) -> T {
    flag.or(manifest).unwrap_or(default)
}

/// Accepts epoch milliseconds, a `YYYY-MM-DD` date (UTC midnight) or an
/// RFC 3339 timestamp.
pub fn parse_time_ms(s: &str) -> Result<i64, CliError> {
    let s = s.trim();
    if let Ok(ms) = s.parse::<i64>() {
        return Ok(ms);
    }
    if let Ok(d) = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp_millis());
    }
    chrono::DateTime::parse_from_rfc3339(s)
        .map(|t| t.timestamp_millis())
        .map_err(|_| CliError::usage(format!("cannot parse time {s:?}")))
}
