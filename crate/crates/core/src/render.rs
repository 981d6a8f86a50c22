//! Text, CSV and JSON renderings of the report tables.
//!
//! CSV and JSON carry every number at full (round-trip) precision. Text
//! output rounds for side-by-side reading: six decimals, switching to
//! six-decimal scientific notation below 1e-4 in magnitude.

use serde_json::{json, Value};

use crate::montecarlo::{CIReport, ParamInterval};
use crate::ou::OuFit;
use crate::summary::{PercentileTable, SummaryReport};
use crate::unitroot::DFResult;

/// One table in all three renderings.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem, e.g. `table1_percentiles`.
    pub name: &'static str,
    pub text: String,
    pub csv: String,
    pub json: Value,
}

/// Rounded display form: `-0.000161`, `-9.312451e-07`.
pub fn display(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    if x.abs() >= 1e-4 {
        return format!("{x:.6}");
    }
    let s = format!("{x:.6e}");
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let (sign, digits) = match exp.strip_prefix('-') {
                Some(d) => ('-', d),
                None => ('+', exp),
            };
            format!("{mantissa}e{sign}{digits:0>2}")
        }
        None => s,
    }
}

/// Shortest round-trip scientific form for CSV.
pub fn full(x: f64) -> String {
    format!("{x:e}")
}

fn opt_full(x: Option<f64>) -> String {
    x.map(full).unwrap_or_default()
}

fn opt_display(x: Option<f64>) -> String {
    x.map(display).unwrap_or_else(|| "-".to_string())
}

fn rank_label(p: f64) -> String {
    if p.fract() == 0.0 {
        format!("{}", p as i64)
    } else {
        format!("{p}")
    }
}

pub fn percentile_table(table: &PercentileTable, count: usize) -> Table {
    let mut text = String::from("Percentile\tValue\n");
    let mut csv = String::from("percentile,value\n");
    let mut rows = Vec::new();
    for (p, v) in table.probes.iter().zip(&table.values) {
        text.push_str(&format!("{}\t{}\n", rank_label(*p), display(*v)));
        csv.push_str(&format!("{},{}\n", p, full(*v)));
        rows.push(json!({ "percentile": p, "value": v }));
    }
    text.push_str(&format!("(n = {count})\n"));
    Table {
        name: "table1_percentiles",
        text,
        csv,
        json: json!({ "title": "Percentiles of the variation", "count": count, "rows": rows }),
    }
}

pub fn yearwise_table(report: &SummaryReport) -> Table {
    let probes = &report.overall.probes;
    let mut text = String::from("Percentile \u{2192}");
    for p in probes {
        text.push('\t');
        text.push_str(&rank_label(*p));
    }
    text.push('\n');
    let mut csv = String::from("year,start_ms,end_ms,count");
    for p in probes {
        csv.push_str(&format!(",p{}", rank_label(*p)));
    }
    csv.push('\n');
    let mut rows = Vec::new();
    for y in &report.years {
        text.push_str(&format!("Year {}", y.label));
        csv.push_str(&format!("{},{},{},{}", y.label, y.start_ms, y.end_ms, y.count));
        for p in probes {
            let v = y.table.as_ref().and_then(|t| t.value(*p));
            text.push('\t');
            text.push_str(&opt_display(v));
            csv.push(',');
            csv.push_str(&opt_full(v));
        }
        text.push('\n');
        csv.push('\n');
        rows.push(json!({
            "year": y.label,
            "start_ms": y.start_ms,
            "end_ms": y.end_ms,
            "count": y.count,
            "percentiles": y.table,
        }));
    }
    Table {
        name: "table2_yearwise_percentiles",
        text,
        csv,
        json: json!({ "title": "Yearwise percentiles of the variation", "rows": rows }),
    }
}

pub fn iqr_table(report: &SummaryReport) -> Table {
    let mut text = String::from("Year number\tInterquartile Range\n");
    let mut csv = String::from("year,iqr\n");
    let mut rows = Vec::new();
    for y in &report.years {
        text.push_str(&format!("Year {}\t{}\n", y.label, opt_display(y.iqr)));
        csv.push_str(&format!("{},{}\n", y.label, opt_full(y.iqr)));
        rows.push(json!({ "year": y.label, "iqr": y.iqr }));
    }
    Table {
        name: "table3_yearwise_iqr",
        text,
        csv,
        json: json!({ "title": "Yearwise interquartile range", "rows": rows }),
    }
}

fn decision(r: &DFResult) -> &'static str {
    if r.reject_null {
        "Rejected"
    } else {
        "Not rejected"
    }
}

/// Decision table; `verbose` adds tau and the critical value to the text form.
pub fn df_table(results: &[DFResult], verbose: bool) -> Table {
    let mut text = if verbose {
        String::from("Model\tAcceptance or Rejection of null hypothesis\ttau\tcritical value (1%)\n")
    } else {
        String::from("Model\tAcceptance or Rejection of null hypothesis\n")
    };
    let mut csv = String::from("model,delta_hat,se_delta,tau,critical_value_1pct,decision,n_used\n");
    for r in results {
        if verbose {
            text.push_str(&format!(
                "Model {}\t{}\t{:.4}\t{:.2}\n",
                r.variant.label(),
                decision(r),
                r.tau,
                r.critical_value_1pct
            ));
        } else {
            text.push_str(&format!("Model {}\t{}\n", r.variant.label(), decision(r)));
        }
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.variant.label(),
            full(r.delta_hat),
            full(r.se_delta),
            full(r.tau),
            full(r.critical_value_1pct),
            decision(r),
            r.n_used
        ));
    }
    Table {
        name: "table4_dickey_fuller",
        text,
        csv,
        json: json!({ "title": "Dickey-Fuller test at the 1% level", "rows": results }),
    }
}

pub fn fit_table(fit: &OuFit) -> Table {
    let p = &fit.params;
    let mut text = String::from("Parameter\tValue\n");
    text.push_str(&format!("alpha\t{}\n", display(p.alpha)));
    text.push_str(&format!("mu\t{}\n", display(p.mu)));
    text.push_str(&format!("sigma\t{}\n", display(p.sigma)));
    text.push_str(&format!(
        "(conditional sd {}, omega {}, n = {}, log-likelihood {:.6}, dt = {})\n",
        display(fit.transition.cond_sd),
        display(fit.transition.omega),
        fit.stats.n,
        fit.log_likelihood,
        fit.dt
    ));
    let csv = format!(
        "parameter,value\nalpha,{}\nmu,{}\nsigma,{}\nsigma_cond,{}\nomega,{}\nn,{}\nlog_likelihood,{}\ndt,{}\n",
        full(p.alpha),
        full(p.mu),
        full(p.sigma),
        full(fit.transition.cond_sd),
        full(fit.transition.omega),
        fit.stats.n,
        full(fit.log_likelihood),
        full(fit.dt)
    );
    Table {
        name: "table5_ou_fit",
        text,
        csv,
        json: json!({
            "title": "Maximum likelihood estimates of the OU process",
            "alpha": p.alpha,
            "mu": p.mu,
            "sigma": p.sigma,
            "sigma_cond": fit.transition.cond_sd,
            "omega": fit.transition.omega,
            "n": fit.stats.n,
            "log_likelihood": fit.log_likelihood,
            "dt": fit.dt,
            "sufficient_stats": fit.stats,
        }),
    }
}

pub fn ci_table(report: &CIReport) -> Table {
    let rows: [(&str, &ParamInterval); 4] = [
        ("alpha", &report.alpha),
        ("mu", &report.mu),
        ("sigma", &report.sigma),
        ("sigma_cond", &report.sigma_cond),
    ];
    let mut text = String::from("Parameter\tLower Bound\tUpper Bound\n");
    let mut csv = String::from("parameter,point,lower,upper\n");
    for (name, iv) in rows {
        text.push_str(&format!("{name}\t{}\t{}\n", display(iv.lower), display(iv.upper)));
        csv.push_str(&format!(
            "{name},{},{},{}\n",
            full(iv.point),
            full(iv.lower),
            full(iv.upper)
        ));
    }
    text.push_str(&format!(
        "({}% intervals, {} replications, {} failed, path length {}, seed {})\n",
        report.confidence * 100.0,
        report.replications,
        report.failures,
        report.path_length,
        report.master_seed
    ));
    Table {
        name: "table6_confidence_intervals",
        text,
        csv,
        json: json!({ "title": "Monte Carlo confidence intervals", "report": report }),
    }
}
