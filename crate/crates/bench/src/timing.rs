//! Per-call wall-clock times of every solver on a fixed pool of trials.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use dram_pose::argmin::{solve_argmin_enp, solve_argmin_onp};
use dram_pose::correct::{correct, CorrectionMethod};
use dram_pose::dram::{solve_dram_enp, solve_dram_onp, solve_pinv_map, solve_qr_map};
use dram_pose::rmsd::{solve_hhn, solve_onp_adapted, solve_qmax, solve_qmin, solve_svd, HhnVariant, Method, Problem};
use dram_pose::simulate::{fmt_f64, generate_trial, TrialData};
use dram_pose::{Mat, PoseError};
use serde::Serialize;

use crate::config::{ConfigSummary, SweepConfig};
use crate::error::{BenchError, Result};
use crate::table::{median, row_keys};

/// Distinct trials cycled through while timing.
pub const POOL_SIZE: usize = 64;
pub const DEFAULT_REPS: usize = 10_000;
pub const BATCHES: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub method: &'static str,
    pub corrected: bool,
    /// Median over batches of the mean time per call.
    pub ns_per_call: f64,
    pub relative_to_pinv: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TimingReport {
    pub config: ConfigSummary,
    pub sigma: f64,
    pub reps: usize,
    pub warmup: usize,
    pub rows: Vec<TimingRow>,
}

fn solve_once(
    problem: Problem,
    data: &TrialData,
    method: Method,
    correction: Option<CorrectionMethod>,
) -> std::result::Result<Mat, PoseError> {
    let (cloud, target, image) = (&data.cloud, &data.target, &data.image);
    let rot = |r: dram_pose::Rotation3| Mat::from_mat3(r.matrix());
    let cand = match (problem, method) {
        (Problem::Enp, Method::Argmin) => return Ok(rot(solve_argmin_enp(cloud, target)?.rotation)),
        (Problem::Onp, Method::Argmin) => return Ok(rot(solve_argmin_onp(cloud, image)?.rotation)),
        (Problem::Enp, Method::Qmin) => return Ok(rot(solve_qmin(cloud, target)?.rotation)),
        (Problem::Enp, Method::Qmax) => return Ok(rot(solve_qmax(cloud, target)?.rotation)),
        (Problem::Enp, Method::Svd) => return Ok(rot(solve_svd(cloud, target)?.rotation)),
        (Problem::Enp, Method::Hhn) => return Ok(rot(solve_hhn(cloud, target, HhnVariant::Minus)?.rotation)),
        (Problem::Onp, m) if m.is_rmsd_closed_form() => return Ok(rot(solve_onp_adapted(cloud, image, m)?.rotation)),
        (Problem::Enp, Method::Dram) => solve_dram_enp(cloud, target)?.matrix,
        (Problem::Enp, Method::Qr) => solve_qr_map(cloud, target)?.matrix,
        (Problem::Enp, _) => solve_pinv_map(cloud, target)?.matrix,
        (Problem::Onp, Method::Dram) => solve_dram_onp(cloud, image)?.matrix.top_rows(2),
        (Problem::Onp, Method::Qr) => solve_qr_map(cloud, image)?.matrix,
        (Problem::Onp, _) => solve_pinv_map(cloud, image)?.matrix,
    };
    match correction {
        Some(cm) => Ok(correct(&cand, cm)?.corrected),
        None => Ok(cand),
    }
}

/// Median over `BATCHES` batches of the per-call time, after discarding
/// the first 10% of `reps` as warmup.
fn time_one(
    problem: Problem,
    pool: &[TrialData],
    method: Method,
    correction: Option<CorrectionMethod>,
    reps: usize,
) -> std::result::Result<f64, PoseError> {
    let warmup = reps / 10;
    for i in 0..warmup {
        black_box(solve_once(problem, &pool[i % pool.len()], method, correction)?);
    }
    let per_batch = ((reps - warmup) / BATCHES).max(1);
    let mut times = Vec::with_capacity(BATCHES);
    let mut i = warmup;
    for _ in 0..BATCHES {
        let start = Instant::now();
        for _ in 0..per_batch {
            black_box(solve_once(problem, black_box(&pool[i % pool.len()]), method, correction)?);
            i += 1;
        }
        times.push(start.elapsed().as_nanos() as f64 / per_batch as f64);
    }
    Ok(median(&mut times))
}

/// Times ArgMin, PINV (the baseline) and `config.methods` on
/// `config.problem` at noise `config.sigmas[0]`. Corrected rows include the
/// cost of the correction.
pub fn time_methods(config: &SweepConfig, reps: usize) -> Result<TimingReport> {
    config.validate()?;
    if config.is_nd() {
        return Err(BenchError::Config("timing is 3D only".into()));
    }
    if reps < 10 {
        return Err(BenchError::Config(format!("need at least 10 repetitions, got {reps}")));
    }
    let sigma = config.sigmas[0];
    let pool = (0..POOL_SIZE as u64)
        .map(|id| generate_trial(config.seed, id, config.k, sigma))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| BenchError::from_pose("timing pool", e))?;
    let mut methods = config.methods.clone();
    if !methods.contains(&Method::Pinv) {
        methods.push(Method::Pinv);
    }
    let keys = row_keys(&methods, config.correction.method().is_some());
    let mut rows = Vec::with_capacity(keys.len());
    for (method, corrected) in keys {
        let cm = if corrected { config.correction.method() } else { None };
        let ns = time_one(config.problem, &pool, method, cm, reps)
            .map_err(|e| BenchError::from_pose(format!("timing {}", method.tag()), e))?;
        rows.push(TimingRow { method: method.tag(), corrected, ns_per_call: ns, relative_to_pinv: f64::NAN });
    }
    let base = rows.iter().find(|r| r.method == "pinv" && !r.corrected).map(|r| r.ns_per_call).unwrap_or(f64::NAN);
    for r in &mut rows {
        r.relative_to_pinv = r.ns_per_call / base;
    }
    Ok(TimingReport { config: config.summary(), sigma, reps, warmup: reps / 10, rows })
}

pub fn write_timing_csv<W: Write>(w: W, rows: &[TimingRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["method", "corrected", "ns_per_call", "relative_to_pinv"])?;
    for r in rows {
        out.write_record([r.method.to_string(), r.corrected.to_string(), fmt_f64(r.ns_per_call), fmt_f64(r.relative_to_pinv)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn render_timing(report: &TimingReport) -> String {
    let mut s = format!(
        "{} timing, K = {}, sigma = {}, {} reps ({} warmup), median of {BATCHES} batches\n{:<8} {:<9} {:>12} {:>10}\n",
        report.config.problem.to_uppercase(),
        report.config.k,
        report.sigma,
        report.reps,
        report.warmup,
        "method",
        "corrected",
        "ns/call",
        "x pinv"
    );
    for r in &report.rows {
        s.push_str(&format!(
            "{:<8} {:<9} {:>12.1} {:>10.3}\n",
            r.method,
            if r.corrected { "yes" } else { "no" },
            r.ns_per_call,
            r.relative_to_pinv
        ));
    }
    s
}
