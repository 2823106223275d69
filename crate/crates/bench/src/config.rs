//! Run configuration shared by the subcommands.

use std::fmt;
use std::str::FromStr;

use dram_pose::correct::CorrectionMethod;
use dram_pose::dram::MAX_DIM;
use dram_pose::rmsd::{Method, Problem};
use serde::Serialize;

use crate::error::{BenchError, Result};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_K: usize = 8;
pub const DEFAULT_TRIALS: usize = 500;
pub const DEFAULT_SORTED_TRIALS: usize = 100;
pub const DEFAULT_SIGMA: f64 = 0.1;
pub const DEFAULT_SIGMA_GRID: &str = "0:0.5:0.02";

/// Optional rotation correction applied to DRaM-class candidates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Correction {
    None,
    #[default]
    Svd,
    BarItzhack,
}

impl Correction {
    pub fn method(self) -> Option<CorrectionMethod> {
        match self {
            Correction::None => None,
            Correction::Svd => Some(CorrectionMethod::Svd),
            Correction::BarItzhack => Some(CorrectionMethod::BarItzhack),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Correction::None => "none",
            Correction::Svd => "svd",
            Correction::BarItzhack => "bar-itzhack",
        }
    }
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Correction {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(Correction::None);
        }
        match CorrectionMethod::from_str(s) {
            Ok(CorrectionMethod::Svd) => Ok(Correction::Svd),
            Ok(CorrectionMethod::BarItzhack) => Ok(Correction::BarItzhack),
            Err(_) => Err(BenchError::Config(format!("unknown correction {s:?} (none, svd, bar-itzhack)"))),
        }
    }
}

pub fn parse_problem(s: &str) -> Result<Problem> {
    s.parse().map_err(|_| BenchError::Config(format!("unknown problem {s:?} (enp, onp)")))
}

pub fn parse_method(s: &str) -> Result<Method> {
    s.parse().map_err(|_| {
        BenchError::Config(format!("unknown method {s:?} (dram, qr, pinv, qmin, qmax, svd, hhn, argmin)"))
    })
}

/// Comma-separated method list; `all` selects every method.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Method::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let m = parse_method(part)?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(BenchError::Config("empty method list".into()));
    }
    Ok(out)
}

/// Parses `a:b:step` into `a, a+step, …, b`. The end point must lie on the
/// grid; values are rounded to 12 decimals so that `0.1·3` prints as `0.3`.
pub fn parse_sigma_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || BenchError::Config(format!("sigma grid {s:?} must look like a:b:step with 0 <= a <= b, step > 0"));
    let parts: Vec<f64> = s.split(':').map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
    let [a, b, step] = parts[..] else { return Err(bad()) };
    if !(a.is_finite() && b.is_finite() && step.is_finite() && a >= 0.0 && b >= a && step > 0.0) {
        return Err(bad());
    }
    let steps = (b - a) / step;
    let n = steps.round();
    if (steps - n).abs() > 1e-9 * steps.max(1.0) {
        return Err(BenchError::Config(format!("sigma grid {s:?}: {b} is not on the grid from {a} in steps of {step}")));
    }
    if n > 1e6 {
        return Err(BenchError::Config(format!("sigma grid {s:?} has more than a million points")));
    }
    Ok((0..=n as usize).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect())
}

/// Parameters of a batch of simulated trials.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub problem: Problem,
    pub sigmas: Vec<f64>,
    pub trials_per_sigma: usize,
    pub k: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub correction: Correction,
    /// Point dimension; anything but 3 selects the N-dimensional DRaM mode.
    pub dim: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConfigSummary {
    pub problem: &'static str,
    pub sigmas: Vec<f64>,
    pub trials_per_sigma: usize,
    pub k: usize,
    pub seed: u64,
    pub methods: Vec<&'static str>,
    pub correction: Correction,
    pub dim: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            problem: Problem::Enp,
            sigmas: parse_sigma_grid(DEFAULT_SIGMA_GRID).expect("default grid"),
            trials_per_sigma: DEFAULT_TRIALS,
            k: DEFAULT_K,
            seed: DEFAULT_SEED,
            methods: Method::ALL.to_vec(),
            correction: Correction::Svd,
            dim: 3,
        }
    }
}

impl SweepConfig {
    /// Plain-data view for JSON output.
    pub fn summary(&self) -> ConfigSummary {
        ConfigSummary {
            problem: self.problem.tag(),
            sigmas: self.sigmas.clone(),
            trials_per_sigma: self.trials_per_sigma,
            k: self.k,
            seed: self.seed,
            methods: self.methods.iter().map(|m| m.tag()).collect(),
            correction: self.correction,
            dim: self.dim,
        }
    }

    pub fn is_nd(&self) -> bool {
        self.dim != 3
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(BenchError::Config(msg));
        if self.sigmas.is_empty() {
            return fail("no noise levels given".into());
        }
        if self.sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return fail(format!("noise levels must be finite and >= 0, got {:?}", self.sigmas));
        }
        if self.sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return fail(format!("noise levels must be strictly ascending, got {:?}", self.sigmas));
        }
        if self.trials_per_sigma == 0 {
            return fail("trials must be >= 1".into());
        }
        if self.methods.is_empty() {
            return fail("empty method list".into());
        }
        if !(2..=MAX_DIM).contains(&self.dim) {
            return fail(format!("dimension must be in 2..={MAX_DIM}, got {}", self.dim));
        }
        let need = (self.dim + 1).max(dram_pose::simulate::MIN_POINTS);
        if self.k < need {
            return fail(format!("need at least {need} points per trial in {}D, got k = {}", self.dim, self.k));
        }
        if self.is_nd() {
            if self.methods.iter().any(|m| *m != Method::Dram) {
                return fail(format!("{}D mode supports only the dram method", self.dim));
            }
            if self.problem != Problem::Enp {
                return fail(format!("{}D mode supports only the enp problem", self.dim));
            }
            if self.correction == Correction::BarItzhack {
                return fail(format!("bar-itzhack correction is 3D only; use svd in {}D", self.dim));
            }
        }
        Ok(())
    }
}
