//! Unit quaternions, the quadratic rotation map and quaternion extraction
//! from 4×4 eigensystems through the adjugate of the characteristic matrix.

use crate::error::{PoseError, Result};
use crate::linalg::{
    adjugate4, cross, mat3_frobenius_diff, mat3_identity, mat3_mul, mat3_transpose, norm, sym_eigen,
    Mat3, Mat4, Vec3, Vec4,
};

/// Quaternion `q0 + q1·i + q2·j + q3·k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quaternion {
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(q0: f64, q1: f64, q2: f64, q3: f64) -> Self {
        Quaternion { q0, q1, q2, q3 }
    }

    pub fn from_array(a: Vec4) -> Self {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> Vec4 {
        [self.q0, self.q1, self.q2, self.q3]
    }

    /// Rotation by `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self> {
        let n = norm(&axis);
        if n < 1e-12 {
            return Err(PoseError::InvalidArgument("rotation axis has zero length".into()));
        }
        let (s, c) = (angle / 2.0).sin_cos();
        Ok(Quaternion::new(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n).canonical())
    }

    pub fn norm(self) -> f64 {
        norm(&self.to_array())
    }

    pub fn dot(self, other: Quaternion) -> f64 {
        self.q0 * other.q0 + self.q1 * other.q1 + self.q2 * other.q2 + self.q3 * other.q3
    }

    pub fn normalized(self) -> Result<Self> {
        let n = self.norm();
        if !n.is_finite() || n < 1e-9 {
            return Err(PoseError::ZeroQuaternion);
        }
        Ok(Quaternion::new(self.q0 / n, self.q1 / n, self.q2 / n, self.q3 / n))
    }

    /// Sign representative with `q0 ≥ 0`; when `q0 = 0` the first nonzero
    /// component is made positive.
    pub fn canonical(self) -> Self {
        let a = self.to_array();
        let lead = a.iter().copied().find(|v| *v != 0.0).unwrap_or(0.0);
        let flip = if a[0] != 0.0 { a[0] < 0.0 } else { lead < 0.0 };
        if flip {
            Quaternion::from_array(a.map(|v| -v))
        } else {
            self
        }
    }

    /// Hamilton product `self ⊗ rhs`.
    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, rhs: Quaternion) -> Quaternion {
        let (a0, a1, a2, a3) = (self.q0, self.q1, self.q2, self.q3);
        let (b0, b1, b2, b3) = (rhs.q0, rhs.q1, rhs.q2, rhs.q3);
        Quaternion::new(
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        )
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(self) -> Quaternion {
        Quaternion::from_array(self.to_array().map(|v| -v))
    }
}

/// Proper 3D rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation3(Mat3);

impl Rotation3 {
    pub const TOL: f64 = 1e-10;

    /// Accepts `m` if `‖mᵀm − I‖_F ≤ 1e-10` and `|det m − 1| ≤ 1e-10`.
    pub fn new(m: Mat3) -> Result<Self> {
        let defect = crate::linalg::orthonormality_defect(&m);
        let det = crate::linalg::det3(&m);
        if !(defect <= Self::TOL && (det - 1.0).abs() <= Self::TOL) {
            return Err(PoseError::InvalidArgument(format!(
                "not a proper rotation (defect {defect:e}, det {det})"
            )));
        }
        Ok(Rotation3(m))
    }

    /// Wraps `m` without checking the invariants.
    pub fn new_unchecked(m: Mat3) -> Self {
        Rotation3(m)
    }

    pub fn identity() -> Self {
        Rotation3(mat3_identity())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Rotation3 {
        Rotation3(mat3_transpose(&self.0))
    }

    pub fn compose(&self, rhs: &Rotation3) -> Rotation3 {
        Rotation3(mat3_mul(&self.0, &rhs.0))
    }
}

/// The first two rows of a rotation: an orthographic projection matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartialRotation23(pub [Vec3; 2]);

impl PartialRotation23 {
    pub fn from_rotation(r: &Rotation3) -> Self {
        PartialRotation23([r.0[0], r.0[1]])
    }

    /// `‖P·Pᵀ − I₂‖_F`.
    pub fn defect(&self) -> f64 {
        let [a, b] = &self.0;
        let aa = a.iter().map(|v| v * v).sum::<f64>() - 1.0;
        let bb = b.iter().map(|v| v * v).sum::<f64>() - 1.0;
        let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        (aa * aa + bb * bb + 2.0 * ab * ab).sqrt()
    }
}

/// Symmetric rank-one matrix of quaternion products `q_ij = q_i·q_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuatAdjugate(pub Mat4);

impl QuatAdjugate {
    pub fn trace(&self) -> f64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }
}

/// The quadratic rotation matrix `R(q)`; `q` is renormalized first.
pub fn quat_to_rot(q: Quaternion) -> Result<Rotation3> {
    let q = q.normalized()?;
    Ok(Rotation3(quat_to_matrix(q)))
}

/// `R(q)` evaluated without normalization (the plain quadratic form).
pub fn quat_to_matrix(q: Quaternion) -> Mat3 {
    let Quaternion { q0, q1, q2, q3 } = q;
    [
        [
            q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3,
            2.0 * q1 * q2 - 2.0 * q0 * q3,
            2.0 * q0 * q2 + 2.0 * q1 * q3,
        ],
        [
            2.0 * q1 * q2 + 2.0 * q0 * q3,
            q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3,
            -2.0 * q0 * q1 + 2.0 * q2 * q3,
        ],
        [
            -2.0 * q0 * q2 + 2.0 * q1 * q3,
            2.0 * q0 * q1 + 2.0 * q2 * q3,
            q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3,
        ],
    ]
}

/// Profile matrix `M(E)` whose maximal eigenvector `q` maximizes
/// `tr(R(q)·E)`.
pub fn profile_matrix(e: &Mat3) -> Mat4 {
    let [[exx, exy, exz], [eyx, eyy, eyz], [ezx, ezy, ezz]] = *e;
    [
        [exx + eyy + ezz, eyz - ezy, ezx - exz, exy - eyx],
        [eyz - ezy, exx - eyy - ezz, exy + eyx, ezx + exz],
        [ezx - exz, exy + eyx, -exx + eyy - ezz, eyz + ezy],
        [exy - eyx, ezx + exz, eyz + ezy, -exx - eyy + ezz],
    ]
}

/// Profile matrix of a 2×3 matrix, i.e. [`profile_matrix`] of the 3×3
/// matrix with a zero third row.
pub fn profile_matrix_23(e: &[Vec3; 2]) -> Mat4 {
    let [[exx, exy, exz], [eyx, eyy, eyz]] = *e;
    [
        [exx + eyy, eyz, -exz, exy - eyx],
        [eyz, exx - eyy, exy + eyx, exz],
        [-exz, exy + eyx, -exx + eyy, eyz],
        [exy - eyx, exz, eyz, -exx - eyy],
    ]
}

/// Which end of the spectrum holds the wanted quaternion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extreme {
    Max,
    Min,
}

/// Relative eigenvalue gap below which an extreme eigenvalue is treated as
/// repeated (and its quaternion as ambiguous).
pub const EIGEN_GAP_TOL: f64 = 1e-10;

/// Finds the extreme eigenvalue of a symmetric 4×4 matrix and recovers its
/// eigenvector from the adjugate of `m − ε·I`. Returns the sign-canonical
/// quaternion and the eigenvalue.
pub fn eigen_quaternion(m: &Mat4, which: Extreme) -> Result<(Quaternion, f64)> {
    let eig = crate::linalg::sym_eigen4(m)?;
    let v = eig.values;
    let scale = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    if scale == 0.0 {
        return Err(PoseError::DegenerateInput("zero eigensystem".into()));
    }
    let (eps, gap) = match which {
        Extreme::Max => (v[0], v[0] - v[1]),
        Extreme::Min => (v[3], v[2] - v[3]),
    };
    if gap <= EIGEN_GAP_TOL * scale {
        return Err(PoseError::DegenerateInput(format!(
            "extreme eigenvalue is repeated (gap {gap:e})"
        )));
    }
    // Scaling keeps the adjugate entries O(1) whatever the data units.
    let mut chi = *m;
    for (i, row) in chi.iter_mut().enumerate() {
        row[i] -= eps;
        for x in row.iter_mut() {
            *x /= scale;
        }
    }
    let q = quat_from_adjugate(&adjugate4(&chi))?;
    Ok((q, eps))
}

/// Rotation nearest to `r` in Frobenius norm, as a quaternion.
pub fn rot_to_quat(r: &Mat3) -> Result<Quaternion> {
    let m = profile_matrix(&mat3_transpose(r));
    Ok(eigen_quaternion(&m, Extreme::Max)?.0)
}

pub fn adjugate_from_quat(q: Quaternion) -> QuatAdjugate {
    let a = q.to_array();
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = a[i] * a[j];
        }
    }
    QuatAdjugate(m)
}

/// Picks the column of a (near) rank-one symmetric adjugate whose diagonal
/// has the largest magnitude, normalizes it and fixes the sign.
pub fn quat_from_adjugate(a: &Mat4) -> Result<Quaternion> {
    let col_norm = |j: usize| (0..4).map(|i| a[i][j] * a[i][j]).sum::<f64>().sqrt();
    if (0..4).all(|j| col_norm(j) < 1e-12) {
        return Err(PoseError::AllColumnsDegenerate);
    }
    let dmax = (0..4).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    let pick = (0..4)
        .find(|&i| a[i][i].abs() >= dmax - 1e-12 * dmax)
        .unwrap_or(0);
    let n = col_norm(pick);
    if n < 1e-12 {
        return Err(PoseError::AllColumnsDegenerate);
    }
    Ok(Quaternion::new(a[0][pick] / n, a[1][pick] / n, a[2][pick] / n, a[3][pick] / n).canonical())
}

/// Angle in degrees between the rotations of two unit quaternions,
/// `2·arccos(|a·b|)`.
///
/// Evaluated as `4·atan2(‖a − b‖, ‖a + b‖)` after aligning signs: the
/// arccos form cannot resolve angles below ~2e-6° because of rounding in
/// the dot product.
pub fn quat_angle_diff(a: Quaternion, b: Quaternion) -> f64 {
    let b = if a.dot(b) < 0.0 { b.neg() } else { b };
    let (a, b) = (a.to_array(), b.to_array());
    let diff: Vec4 = std::array::from_fn(|i| a[i] - b[i]);
    let sum: Vec4 = std::array::from_fn(|i| a[i] + b[i]);
    (4.0 * norm(&diff).atan2(norm(&sum))).to_degrees()
}

/// Angle in degrees between two rotation matrices, computed from
/// `‖A − B‖_F` so it stays accurate for tiny angles.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    // ‖A − B‖_F = 2√2·sin(θ/2) for rotations A, B
    let d = mat3_frobenius_diff(a, b) / (2.0 * std::f64::consts::SQRT_2);
    2.0 * d.min(1.0).asin().to_degrees()
}

/// Completes a partial rotation with the normalized cross product of its rows.
pub fn extend_partial_rotation(p: &PartialRotation23) -> Result<Rotation3> {
    let [r1, r2] = p.0;
    let c = cross(&r1, &r2);
    let n = norm(&c);
    if !n.is_finite() || n < 1e-9 {
        return Err(PoseError::DegenerateRows);
    }
    Ok(Rotation3([r1, r2, c.map(|v| v / n)]))
}

/// Eigen-based check used by tests: second-largest eigenvalue of an adjugate.
pub fn adjugate_rank_defect(a: &QuatAdjugate) -> f64 {
    sym_eigen(&a.0).values[1].abs()
}
