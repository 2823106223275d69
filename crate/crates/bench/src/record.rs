//! Per-trial result rows and their CSV form.

use std::io::Write;

use dram_pose::simulate::fmt_f64;
use serde::Serialize;

use crate::error::Result;

pub const RECORD_HEADER: [&str; 11] =
    ["trial_id", "method", "corrected", "sigma", "k", "n", "loss", "angle_deg", "defect", "wall_time_ns", "seed"];

/// One solver output on one simulated trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    /// `enp` or `onp`; the CSV form keeps one problem per file.
    pub problem: &'static str,
    pub method: &'static str,
    pub corrected: bool,
    pub sigma: f64,
    pub k: usize,
    pub n: usize,
    pub loss: f64,
    /// Angle to the ArgMin rotation of the same trial (to the generating
    /// rotation in N-dimensional mode).
    pub angle_deg: f64,
    /// `‖MMᵀ − I‖_F` of the reported matrix.
    pub defect: f64,
    pub wall_time_ns: u64,
    pub seed: u64,
}

impl TrialRecord {
    /// Series label used by sweeps: the method tag, suffixed for
    /// corrected candidates.
    pub fn series(&self) -> String {
        if self.corrected {
            format!("{}_corrected", self.method)
        } else {
            self.method.to_string()
        }
    }

    fn csv_row(&self) -> [String; 11] {
        [
            self.trial_id.to_string(),
            self.method.to_string(),
            self.corrected.to_string(),
            fmt_f64(self.sigma),
            self.k.to_string(),
            self.n.to_string(),
            fmt_f64(self.loss),
            fmt_f64(self.angle_deg),
            fmt_f64(self.defect),
            self.wall_time_ns.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Writes records under [`RECORD_HEADER`], floats at 17 significant digits.
pub fn write_records_csv<W: Write>(w: W, records: &[TrialRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RECORD_HEADER)?;
    for r in records {
        out.write_record(r.csv_row())?;
    }
    out.flush()?;
    Ok(())
}
