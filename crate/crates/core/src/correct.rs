//! Mapping a deformed candidate matrix to the nearest proper rotation in
//! Frobenius norm.
//!
//! Candidates are passed in the orientation the solvers emit them
//! (`y ≈ C·x`); any transposing needed by a method happens inside.
//! A square N×N candidate maps to the nearest SO(N) matrix. An
//! (N−1)×N candidate (projection rows) maps to the nearest matrix with
//! orthonormal rows, which is then completed to SO(N) by the generalized
//! cross product.

use std::fmt;
use std::str::FromStr;

use crate::dram::extend_rows;
use crate::error::{PoseError, Result};
use crate::linalg::{svd, Mat, Mat3, RANK_TOL};
use crate::quat::{eigen_quaternion, profile_matrix_23, quat_to_rot, rot_to_quat, Extreme, Rotation3};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum CorrectionMethod {
    /// Polar factor from the singular value decomposition.
    #[default]
    Svd,
    /// Maximal eigenvector of the profile matrix of the candidate
    /// (3×3 and 2×3 only).
    BarItzhack,
}

impl CorrectionMethod {
    pub fn tag(self) -> &'static str {
        match self {
            CorrectionMethod::Svd => "svd",
            CorrectionMethod::BarItzhack => "bar-itzhack",
        }
    }
}

impl fmt::Display for CorrectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for CorrectionMethod {
    type Err = PoseError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "svd" => Ok(CorrectionMethod::Svd),
            "bar-itzhack" | "baritzhack" => Ok(CorrectionMethod::BarItzhack),
            _ => Err(PoseError::InvalidArgument(format!("unknown correction {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionReport {
    /// Always square with determinant +1.
    pub corrected: Mat,
    pub method: CorrectionMethod,
    /// Distance between the candidate and the matching rows of `corrected`.
    pub frobenius_distance: f64,
    /// `‖CᵀC − I‖_F` for square input, `‖CCᵀ − I‖_F` for projection rows.
    pub input_defect: f64,
}

impl CorrectionReport {
    pub fn rotation3(&self) -> Option<Rotation3> {
        self.corrected.to_mat3().map(Rotation3::new_unchecked)
    }

    fn new(corrected: Mat, candidate: &Mat, method: CorrectionMethod) -> Self {
        let top = corrected.top_rows(candidate.rows());
        CorrectionReport {
            frobenius_distance: top.sub(candidate).frobenius(),
            input_defect: row_defect(candidate),
            corrected,
            method,
        }
    }
}

fn row_defect(c: &Mat) -> f64 {
    let g = if c.rows() == c.cols() { c.tr_matmul(c) } else { c.matmul(&c.transpose()) };
    g.sub(&Mat::identity(g.rows())).frobenius()
}

fn check_shape(c: &Mat) -> Result<()> {
    let (p, n) = c.shape();
    if n < 2 || !(p == n || p + 1 == n) {
        return Err(PoseError::SizeMismatch {
            expected: "N×N or (N−1)×N candidate".into(),
            found: format!("{p}×{n}"),
        });
    }
    if c.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(PoseError::NonFinite);
    }
    Ok(())
}

/// Square: `U·diag(1, …, 1, sign(det U·det V))·Vᵀ`. Rectangular:
/// `U·[I 0]·Vᵀ` completed by the generalized cross product.
pub fn correct_svd(candidate: &Mat) -> Result<CorrectionReport> {
    check_shape(candidate)?;
    let (p, n) = candidate.shape();
    let s = svd(candidate)?;
    let smax = s.s[0];
    let smin = s.s[p - 1];
    if !(smin > RANK_TOL * smax) {
        return Err(PoseError::RankDeficient { ratio: if smax > 0.0 { smin / smax } else { 0.0 } });
    }
    let corrected = if p == n {
        let d = if s.u.det() * s.v.det() < 0.0 { -1.0 } else { 1.0 };
        Mat::from_fn(n, n, |i, j| {
            (0..n).map(|k| s.u[(i, k)] * s.v[(j, k)] * if k + 1 == n { d } else { 1.0 }).sum()
        })
    } else {
        let rows = Mat::from_fn(p, n, |i, j| (0..p).map(|k| s.u[(i, k)] * s.v[(j, k)]).sum());
        extend_rows(&rows)?
    };
    Ok(CorrectionReport::new(corrected, candidate, CorrectionMethod::Svd))
}

/// Quaternion route for 3×3 and 2×3 candidates.
pub fn correct_bar_itzhack(candidate: &Mat) -> Result<CorrectionReport> {
    check_shape(candidate)?;
    let r = match candidate.shape() {
        (3, 3) => {
            let c = candidate.to_mat3().expect("3×3");
            quat_to_rot(rot_to_quat(&c)?)?
        }
        (2, 3) => {
            let rows = [0, 1].map(|i| {
                let r = candidate.row(i);
                [r[0], r[1], r[2]]
            });
            let (q, _) = eigen_quaternion(&profile_matrix_23(&rows), Extreme::Max)?;
            quat_to_rot(q)?.transpose()
        }
        (p, n) => {
            return Err(PoseError::InvalidArgument(format!(
                "quaternion correction needs a 3×3 or 2×3 candidate, got {p}×{n}"
            )))
        }
    };
    Ok(CorrectionReport::new(Mat::from_mat3(r.matrix()), candidate, CorrectionMethod::BarItzhack))
}

pub fn correct(candidate: &Mat, method: CorrectionMethod) -> Result<CorrectionReport> {
    match method {
        CorrectionMethod::Svd => correct_svd(candidate),
        CorrectionMethod::BarItzhack => correct_bar_itzhack(candidate),
    }
}

/// 3×3 convenience wrapper.
pub fn correct3(candidate: &Mat3, method: CorrectionMethod) -> Result<Rotation3> {
    let report = correct(&Mat::from_mat3(candidate), method)?;
    Ok(report.rotation3().expect("3×3 result"))
}
