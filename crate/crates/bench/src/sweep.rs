//! Mean loss as a function of the noise level.

use std::io::Write;

use dram_pose::simulate::fmt_f64;
use serde::Serialize;

use crate::config::{ConfigSummary, SweepConfig};
use crate::error::Result;
use crate::record::TrialRecord;
use crate::svg::{line_chart, Series};
use crate::table::row_keys;
use crate::trial::{run_trials, Skipped};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    /// Method tag, with `_corrected` for corrected DRaM-class candidates.
    pub series: String,
    pub sigma: f64,
    pub mean_loss: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub config: ConfigSummary,
    pub points: Vec<SweepPoint>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
    pub skipped: Vec<Skipped>,
}

impl SweepReport {
    /// Series names in plotting order.
    pub fn series_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for p in &self.points {
            if !names.contains(&p.series) {
                names.push(p.series.clone());
            }
        }
        names
    }

    pub fn curve(&self, series: &str) -> Vec<(f64, f64)> {
        self.points.iter().filter(|p| p.series == series).map(|p| (p.sigma, p.mean_loss)).collect()
    }
}

/// Every trial id is reused at every noise level, so the curves share
/// clouds and rotations and differ only in the noise amplitude.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepReport> {
    config.validate()?;
    let keys = row_keys(&config.methods, config.correction.method().is_some());
    let mut points = Vec::new();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for &sigma in &config.sigmas {
        let out = run_trials(config, config.problem, sigma, config.trials_per_sigma)?;
        for &(method, corrected) in &keys {
            let losses: Vec<f64> = out
                .records
                .iter()
                .filter(|r| r.method == method.tag() && r.corrected == corrected)
                .map(|r| r.loss)
                .collect();
            if losses.is_empty() {
                continue;
            }
            let series = if corrected { format!("{}_corrected", method.tag()) } else { method.tag().to_string() };
            points.push(SweepPoint {
                series,
                sigma,
                mean_loss: losses.iter().sum::<f64>() / losses.len() as f64,
                trials: losses.len(),
            });
        }
        records.extend(out.records);
        skipped.extend(out.skipped);
    }
    Ok(SweepReport { config: config.summary(), points, records, skipped })
}

pub fn write_sweep_csv<W: Write>(w: W, points: &[SweepPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["series", "sigma", "mean_loss", "trials"])?;
    for p in points {
        out.write_record([p.series.clone(), fmt_f64(p.sigma), fmt_f64(p.mean_loss), p.trials.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn sweep_svg(report: &SweepReport) -> String {
    let series: Vec<Series> =
        report.series_names().into_iter().map(|name| Series { points: report.curve(&name), name }).collect();
    let title = format!(
        "{} mean loss vs noise (K = {}, {} trials per level)",
        report.config.problem.to_uppercase(),
        report.config.k,
        report.config.trials_per_sigma
    );
    line_chart(&title, "sigma", "mean loss", &series)
}
