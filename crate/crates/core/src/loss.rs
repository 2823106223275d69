//! Mean squared residual losses for the two alignment problems.

use crate::error::{PoseError, Result};
use crate::linalg::{Mat, Mat3, Vec3};
use crate::simulate::{OrthoImage, PointCloud, TargetCloud};

/// Mean squared residual per point; never negative.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LossValue(f64);

impl LossValue {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            return Err(PoseError::InvalidArgument(format!("loss must be >= 0, got {value}")));
        }
        Ok(LossValue(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_pair(cloud_k: usize, other_k: usize, cloud_dim: usize) -> Result<()> {
    if cloud_k != other_k {
        return Err(PoseError::SizeMismatch {
            expected: format!("{cloud_k} points"),
            found: format!("{other_k} points"),
        });
    }
    if cloud_dim != 3 {
        return Err(PoseError::SizeMismatch {
            expected: "3D reference cloud".into(),
            found: format!("{cloud_dim}D"),
        });
    }
    Ok(())
}

/// `(1/K)·Σ‖r·x_k − y_k‖²`. `r` need not be orthonormal.
pub fn enp_loss(r: &Mat3, cloud: &PointCloud, target: &TargetCloud) -> Result<LossValue> {
    check_pair(cloud.len(), target.len(), cloud.dim())?;
    if target.dim() != 3 {
        return Err(PoseError::SizeMismatch {
            expected: "3D target".into(),
            found: format!("{}D", target.dim()),
        });
    }
    Ok(LossValue(residual_mean(r, cloud, |k| target.point(k))))
}

/// `(1/K)·Σ‖p·x_k − u_k‖²` for a 2×3 `p`. A 3×3 input is truncated to its
/// top two rows.
pub fn onp_loss(p: &[Vec3], cloud: &PointCloud, image: &OrthoImage) -> Result<LossValue> {
    check_pair(cloud.len(), image.len(), cloud.dim())?;
    if !(2..=3).contains(&p.len()) {
        return Err(PoseError::SizeMismatch {
            expected: "2 or 3 rows".into(),
            found: format!("{} rows", p.len()),
        });
    }
    if image.dim() != 2 {
        return Err(PoseError::SizeMismatch {
            expected: "2D image".into(),
            found: format!("{}D", image.dim()),
        });
    }
    Ok(LossValue(residual_mean(&p[..2], cloud, |k| image.point(k))))
}

/// `(1/K)·Σ‖r·x_k − y_k‖²` in N dimensions, for an N×N `r`.
pub fn enp_loss_nd(r: &Mat, cloud: &PointCloud, target: &TargetCloud) -> Result<LossValue> {
    let n = cloud.dim();
    if cloud.len() != target.len() || target.dim() != n || r.shape() != (n, n) {
        return Err(PoseError::SizeMismatch {
            expected: format!("{} points, {n}D target and {n}x{n} matrix", cloud.len()),
            found: format!("{} points, {}D target and {}x{} matrix", target.len(), target.dim(), r.rows(), r.cols()),
        });
    }
    let mapped = cloud.as_mat().matmul(&r.transpose());
    let sum: f64 = mapped.as_slice().iter().zip(target.as_mat().as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(LossValue(sum / cloud.len().max(1) as f64))
}

fn residual_mean<'a>(rows: &[Vec3], cloud: &PointCloud, target: impl Fn(usize) -> &'a [f64]) -> f64 {
    let k = cloud.len();
    let mut sum = 0.0;
    for i in 0..k {
        let x = cloud.point3(i);
        let y = target(i);
        for (row, yj) in rows.iter().zip(y) {
            let d = row[0] * x[0] + row[1] * x[1] + row[2] * x[2] - yj;
            sum += d * d;
        }
    }
    sum / k as f64
}
