//! Method comparison table: every method on exact and noisy data for both
//! problems.

use std::fmt::Write as _;
use std::io::Write;

use dram_pose::rmsd::{Method, Problem};
use dram_pose::simulate::fmt_f64;
use serde::Serialize;

use crate::config::{ConfigSummary, SweepConfig};
use crate::error::Result;
use crate::record::TrialRecord;
use crate::trial::{run_trials, Skipped};

/// Aggregate of one (noise level, problem, method, corrected) cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    /// `A` for the first noise level, `B` for the second, …
    pub block: char,
    pub sigma: f64,
    pub problem: &'static str,
    pub method: &'static str,
    pub corrected: bool,
    pub trials: usize,
    pub median_loss: f64,
    pub median_angle_deg: f64,
    pub median_defect: f64,
    pub total_time_ns: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TableReport {
    pub config: ConfigSummary,
    pub rows: Vec<TableRow>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
    pub skipped: Vec<Skipped>,
}

impl TableReport {
    pub fn records_for(&self, problem: Problem) -> Vec<TrialRecord> {
        self.records.iter().filter(|r| r.problem == problem.tag()).cloned().collect()
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Row order: ArgMin first, then the configured methods; bare DRaM-class
/// rows precede their corrected counterparts.
pub fn row_keys(methods: &[Method], corrected: bool) -> Vec<(Method, bool)> {
    let mut keys = vec![(Method::Argmin, false)];
    for &m in methods.iter().filter(|m| **m != Method::Argmin) {
        keys.push((m, false));
        if corrected && m.is_dram_class() {
            keys.push((m, true));
        }
    }
    keys
}

/// Runs `config.trials_per_sigma` trials per noise level in
/// `config.sigmas` (one block each) for EnP and OnP. `config.problem` is
/// ignored except in N-dimensional mode, which is EnP only.
pub fn run_table(config: &SweepConfig) -> Result<TableReport> {
    config.validate()?;
    let problems: &[Problem] = if config.is_nd() { &[Problem::Enp] } else { &[Problem::Enp, Problem::Onp] };
    let keys = row_keys(&config.methods, config.correction.method().is_some());
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (b, &sigma) in config.sigmas.iter().enumerate() {
        let block = (b'A' + (b % 26) as u8) as char;
        for &problem in problems {
            let out = run_trials(config, problem, sigma, config.trials_per_sigma)?;
            for &(method, corrected) in &keys {
                let cell: Vec<&TrialRecord> =
                    out.records.iter().filter(|r| r.method == method.tag() && r.corrected == corrected).collect();
                if cell.is_empty() {
                    continue;
                }
                let pick = |f: fn(&TrialRecord) -> f64| -> Vec<f64> { cell.iter().map(|r| f(r)).collect() };
                rows.push(TableRow {
                    block,
                    sigma,
                    problem: problem.tag(),
                    method: method.tag(),
                    corrected,
                    trials: cell.len(),
                    median_loss: median(&mut pick(|r| r.loss)),
                    median_angle_deg: median(&mut pick(|r| r.angle_deg)),
                    median_defect: median(&mut pick(|r| r.defect)),
                    total_time_ns: cell.iter().map(|r| r.wall_time_ns).sum(),
                });
            }
            records.extend(out.records);
            skipped.extend(out.skipped);
        }
    }
    Ok(TableReport { config: config.summary(), rows, records, skipped })
}

pub const TABLE_HEADER: [&str; 10] = [
    "block",
    "sigma",
    "problem",
    "method",
    "corrected",
    "trials",
    "median_loss",
    "median_angle_deg",
    "median_defect",
    "total_time_ns",
];

pub fn write_table_csv<W: Write>(w: W, rows: &[TableRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TABLE_HEADER)?;
    for r in rows {
        out.write_record([
            r.block.to_string(),
            fmt_f64(r.sigma),
            r.problem.to_string(),
            r.method.to_string(),
            r.corrected.to_string(),
            r.trials.to_string(),
            fmt_f64(r.median_loss),
            fmt_f64(r.median_angle_deg),
            fmt_f64(r.median_defect),
            r.total_time_ns.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Aligned plain-text rendering, one block per noise level.
pub fn render_table(report: &TableReport) -> String {
    let mut s = String::new();
    let mut current = None;
    for r in &report.rows {
        if current != Some(r.block) {
            current = Some(r.block);
            let what = if r.sigma == 0.0 { "exact data".to_string() } else { format!("sigma = {}", r.sigma) };
            let _ = writeln!(
                s,
                "\n{}. {what}, K = {}, {} trials, correction {}",
                r.block, report.config.k, report.config.trials_per_sigma, report.config.correction
            );
            let _ = writeln!(
                s,
                "{:<7} {:<8} {:<9} {:>12} {:>12} {:>14} {:>12}",
                "problem", "method", "corrected", "time_ms", "median_loss", "median_angle", "median_defect"
            );
        }
        let _ = writeln!(
            s,
            "{:<7} {:<8} {:<9} {:>12.3} {:>12.4e} {:>14.4e} {:>12.3e}",
            r.problem,
            r.method,
            if r.corrected { "yes" } else { "no" },
            r.total_time_ns as f64 * 1e-6,
            r.median_loss,
            r.median_angle_deg,
            r.median_defect
        );
    }
    if !report.skipped.is_empty() {
        let _ = writeln!(s, "\n{} solver runs skipped on degenerate input", report.skipped.len());
    }
    s
}
