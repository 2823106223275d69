//! Per-trial loss traces sorted by the optimal loss.

use std::io::Write;

use dram_pose::argmin::{solve_argmin_enp, solve_argmin_onp};
use dram_pose::correct::correct;
use dram_pose::dram::{solve_dram_enp, solve_dram_onp};
use dram_pose::linalg::Mat;
use dram_pose::loss::{enp_loss, onp_loss};
use dram_pose::rmsd::Problem;
use dram_pose::simulate::{fmt_f64, generate_trial, TrialData};
use dram_pose::PoseError;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigSummary, SweepConfig};
use crate::error::{BenchError, Result};
use crate::svg::{line_chart, Series};
use crate::trial::Skipped;

/// Scale applied to the difference series so they are visible next to
/// the losses themselves.
pub const DIFF_SCALE: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SortedRow {
    pub rank: usize,
    pub trial_id: u64,
    /// ArgMin loss.
    pub optimal: f64,
    /// Loss of the generating rotation.
    pub r_init: f64,
    pub bare: f64,
    pub corrected: f64,
    pub diff_corrected: f64,
    pub diff_bare: f64,
    pub diff_r_init: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SortedReport {
    pub config: ConfigSummary,
    pub sigma: f64,
    pub rows: Vec<SortedRow>,
    pub skipped: Vec<Skipped>,
}

fn rows3(m: &Mat) -> Vec<[f64; 3]> {
    (0..m.rows()).map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]]).collect()
}

fn loss(problem: Problem, data: &TrialData, m: &Mat) -> std::result::Result<f64, PoseError> {
    let rows = rows3(m);
    Ok(match problem {
        Problem::Enp => enp_loss(&[rows[0], rows[1], rows[2]], &data.cloud, &data.target)?.value(),
        Problem::Onp => onp_loss(&rows, &data.cloud, &data.image)?.value(),
    })
}

/// Losses of one trial: (optimal, r_init, bare, corrected).
fn trial_losses(config: &SweepConfig, sigma: f64, trial_id: u64) -> Result<std::result::Result<[f64; 4], Skipped>> {
    let problem = config.problem;
    let cm = config.correction.method().expect("validated");
    let label = |what: &str| format!("trial {trial_id} (seed {}, sigma {sigma}) {what}", config.seed);
    let data = generate_trial(config.seed, trial_id, config.k, sigma).map_err(|e| BenchError::from_pose(label("data"), e))?;
    let optimal = match problem {
        Problem::Enp => solve_argmin_enp(&data.cloud, &data.target),
        Problem::Onp => solve_argmin_onp(&data.cloud, &data.image),
    }
    .map_err(|e| BenchError::from_pose(label("argmin"), e))?
    .loss
    .value();
    let r_init = loss(problem, &data, &Mat::from_mat3(data.rotation.matrix())).map_err(|e| BenchError::from_pose(label("r_init"), e))?;
    let dram = (|| -> std::result::Result<[f64; 2], PoseError> {
        let cand = match problem {
            Problem::Enp => solve_dram_enp(&data.cloud, &data.target)?.matrix,
            Problem::Onp => solve_dram_onp(&data.cloud, &data.image)?.matrix.top_rows(2),
        };
        let fixed = correct(&cand, cm)?.corrected;
        Ok([loss(problem, &data, &cand)?, loss(problem, &data, &fixed)?])
    })();
    match dram {
        Ok([bare, corrected]) => Ok(Ok([optimal, r_init, bare, corrected])),
        Err(e) => match BenchError::from_pose(label("dram"), e) {
            BenchError::Degenerate { source, .. } => {
                Ok(Err(Skipped { trial_id, sigma, method: "dram", reason: source.to_string() }))
            }
            other => Err(other),
        },
    }
}

/// Runs the trials at `config.sigmas[0]` and sorts them by ArgMin loss
/// (ties by trial id). Difference series are `DIFF_SCALE·(x − optimal)`.
pub fn run_sorted_losses(config: &SweepConfig) -> Result<SortedReport> {
    config.validate()?;
    if config.is_nd() {
        return Err(BenchError::Config("sorted traces are 3D only".into()));
    }
    if config.sigmas.len() != 1 {
        return Err(BenchError::Config(format!("sorted traces take one noise level, got {}", config.sigmas.len())));
    }
    if config.correction.method().is_none() {
        return Err(BenchError::Config("sorted traces need a correction (svd or bar-itzhack)".into()));
    }
    let sigma = config.sigmas[0];
    let results: Vec<Result<std::result::Result<[f64; 4], Skipped>>> =
        (0..config.trials_per_sigma as u64).into_par_iter().map(|id| trial_losses(config, sigma, id)).collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (id, r) in results.into_iter().enumerate() {
        match r? {
            Ok([optimal, r_init, bare, corrected]) => rows.push(SortedRow {
                rank: 0,
                trial_id: id as u64,
                optimal,
                r_init,
                bare,
                corrected,
                diff_corrected: DIFF_SCALE * (corrected - optimal),
                diff_bare: DIFF_SCALE * (bare - optimal),
                diff_r_init: DIFF_SCALE * (r_init - optimal),
            }),
            Err(s) => skipped.push(s),
        }
    }
    rows.sort_by(|a, b| a.optimal.total_cmp(&b.optimal).then(a.trial_id.cmp(&b.trial_id)));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i;
    }
    Ok(SortedReport { config: config.summary(), sigma, rows, skipped })
}

pub const SORTED_HEADER: [&str; 9] =
    ["rank", "trial_id", "optimal", "r_init", "bare", "corrected", "diff_corrected_x20", "diff_bare_x20", "diff_r_init_x20"];

pub fn write_sorted_csv<W: Write>(w: W, rows: &[SortedRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SORTED_HEADER)?;
    for r in rows {
        out.write_record([
            r.rank.to_string(),
            r.trial_id.to_string(),
            fmt_f64(r.optimal),
            fmt_f64(r.r_init),
            fmt_f64(r.bare),
            fmt_f64(r.corrected),
            fmt_f64(r.diff_corrected),
            fmt_f64(r.diff_bare),
            fmt_f64(r.diff_r_init),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn sorted_svg(report: &SortedReport) -> String {
    let trace = |name: &str, f: fn(&SortedRow) -> f64| Series {
        name: name.to_string(),
        points: report.rows.iter().map(|r| (r.rank as f64, f(r))).collect(),
    };
    let series = vec![
        trace("optimal (ArgMin)", |r| r.optimal),
        trace("R_init", |r| r.r_init),
        trace("bare DRaM", |r| r.bare),
        trace("corrected DRaM", |r| r.corrected),
        trace("20x (corrected - optimal)", |r| r.diff_corrected),
        trace("20x (bare - optimal)", |r| r.diff_bare),
    ];
    let title = format!(
        "{} losses sorted by optimal loss (sigma = {}, K = {})",
        report.config.problem.to_uppercase(),
        report.sigma,
        report.config.k
    );
    line_chart(&title, "trial (sorted)", "loss", &series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Correction;

    fn config(problem: Problem) -> SweepConfig {
        SweepConfig { problem, sigmas: vec![0.1], trials_per_sigma: 40, ..SweepConfig::default() }
    }

    #[test]
    fn traces_keep_their_expected_order() {
        for problem in [Problem::Enp, Problem::Onp] {
            let report = run_sorted_losses(&config(problem)).unwrap();
            assert_eq!(report.rows.len(), 40);
            assert!(report.rows.windows(2).all(|w| w[0].optimal <= w[1].optimal));
            for r in &report.rows {
                assert!(r.diff_corrected >= -1e-12 * DIFF_SCALE, "{r:?}");
                assert!(r.r_init >= r.optimal - 1e-12, "{r:?}");
                assert!((r.diff_bare - DIFF_SCALE * (r.bare - r.optimal)).abs() < 1e-15);
            }
            if problem == Problem::Enp {
                let below = report.rows.iter().filter(|r| r.bare <= r.optimal).count();
                assert!(below >= 36, "{below} of 40");
            }
            assert!(sorted_svg(&report).contains("20x (corrected - optimal)"));
        }
    }

    #[test]
    fn sorted_rejects_bad_configs() {
        let mut c = config(Problem::Enp);
        c.sigmas = vec![0.0, 0.1];
        assert!(run_sorted_losses(&c).is_err());
        c.sigmas = vec![0.1];
        c.correction = Correction::None;
        assert!(run_sorted_losses(&c).is_err());
    }

    #[test]
    fn csv_has_one_row_per_trial() {
        let report = run_sorted_losses(&SweepConfig { trials_per_sigma: 5, ..config(Problem::Enp) }).unwrap();
        let mut buf = Vec::new();
        write_sorted_csv(&mut buf, &report.rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("rank,trial_id,optimal,"));
    }
}
