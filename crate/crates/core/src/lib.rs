//! Closed-form and iterative rotation estimators for matched point clouds.
//!
//! Two problems are covered:
//!
//! * **EnP**: find the rotation `R` minimizing `Σ‖R·x_k − y_k‖²` between a
//!   centered reference cloud `X` and a rotated target `Y`;
//! * **OnP**: find the rotation whose top two rows best map `X` onto an
//!   orthographic image `U`.
//!
//! Solvers come in two families. The determinant-ratio family
//! ([`dram`]) is exact on noise-free data and returns a bare matrix
//! candidate that must be passed through [`correct`] when the data is
//! noisy. The least-squares family ([`rmsd`], [`argmin`]) always returns a
//! proper rotation and is optimal for EnP.
//!
//! All point sets store one point per row.

// Index loops mirror the matrix formulas. `!(a > b)` is used on purpose so
// that NaN fails the check.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod argmin;
pub mod correct;
pub mod dram;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod quat;
pub mod rmsd;
pub mod simulate;

pub use error::{PoseError, Result};
pub use linalg::{Mat, Mat3, Vec3};
pub use quat::{PartialRotation23, Quaternion, Rotation3};
pub use simulate::{OrthoImage, PointCloud, TargetCloud};
