//! Least-squares (RMSD) solvers: quaternion eigenvector methods, the SVD
//! solution and the polar-decomposition (HHN) form, with the adaptations
//! used when they are fed orthographic image data.
//!
//! Every solver works from the cross-covariance `E = XᵀY`
//! (`E_ab = Σ_k x_ka·y_kb`) and returns a proper rotation `R` with
//! `y_k ≈ R·x_k`.

use std::fmt;
use std::str::FromStr;

use crate::error::{PoseError, Result};
use crate::linalg::{
    det3, frobenius, mat3_mul, mat3_transpose, orthonormality_defect, svd, svd3, sym_matrix_power, sym_pinv_sqrt,
    HalfPower, Mat, Mat3, Mat4, Vec3,
};
use crate::loss::{enp_loss, onp_loss, LossValue};
use crate::quat::{
    eigen_quaternion, extend_partial_rotation, profile_matrix, profile_matrix_23, quat_to_rot,
    rotation_angle_between, Extreme, PartialRotation23, Rotation3,
};
use crate::simulate::{check_pair, lift_ortho_to_plane, OrthoImage, PointCloud, TargetCloud, DEFAULT_LIFT_Z};

/// Minimum point count for the 3D solvers.
pub const MIN_POINTS_ENP: usize = 3;
/// Minimum point count for the image solvers.
pub const MIN_POINTS_ONP: usize = 4;

/// Solver identifier used in reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Dram,
    Qr,
    Pinv,
    Qmin,
    Qmax,
    Svd,
    Hhn,
    Argmin,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Argmin,
        Method::Qmin,
        Method::Qmax,
        Method::Svd,
        Method::Hhn,
        Method::Dram,
        Method::Qr,
        Method::Pinv,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Dram => "dram",
            Method::Qr => "qr",
            Method::Pinv => "pinv",
            Method::Qmin => "qmin",
            Method::Qmax => "qmax",
            Method::Svd => "svd",
            Method::Hhn => "hhn",
            Method::Argmin => "argmin",
        }
    }

    /// DRaM, QR-map and pseudoinverse-map.
    pub fn is_dram_class(self) -> bool {
        matches!(self, Method::Dram | Method::Qr | Method::Pinv)
    }

    /// Closed-form least-squares solvers (everything but ArgMin and the
    /// DRaM class).
    pub fn is_rmsd_closed_form(self) -> bool {
        matches!(self, Method::Qmin | Method::Qmax | Method::Svd | Method::Hhn)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = PoseError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s.to_ascii_lowercase())
            .ok_or_else(|| PoseError::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// 3D↔3D or 3D↔2D orthographic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Problem {
    Enp,
    Onp,
}

impl Problem {
    pub fn tag(self) -> &'static str {
        match self {
            Problem::Enp => "enp",
            Problem::Onp => "onp",
        }
    }
}

impl FromStr for Problem {
    type Err = PoseError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "enp" => Ok(Problem::Enp),
            "onp" => Ok(Problem::Onp),
            _ => Err(PoseError::InvalidArgument(format!("unknown problem {s:?}"))),
        }
    }
}

/// Which of the two polar-decomposition formulas to evaluate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HhnVariant {
    /// `(EᵀE)^(+1/2)·E⁻¹`
    Plus,
    /// `(EᵀE)^(−1/2)·Eᵀ`; needs no inverse of `E`.
    #[default]
    Minus,
}

/// `E = XᵀY`, `E_ab = Σ_k x_ka·y_kb`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossCovariance(pub Mat3);

impl CrossCovariance {
    pub fn new(cloud: &PointCloud, target: &TargetCloud) -> Result<Self> {
        check_pair(cloud.as_mat(), target.as_mat(), 3, 3, 1)?;
        Ok(Self::from_mats(cloud.as_mat(), target.as_mat()))
    }

    pub(crate) fn from_mats(x: &Mat, y: &Mat) -> Self {
        let mut e = [[0.0; 3]; 3];
        for k in 0..x.rows() {
            let (p, q) = (x.row(k), y.row(k));
            for a in 0..3 {
                for b in 0..3 {
                    e[a][b] += p[a] * q[b];
                }
            }
        }
        CrossCovariance(e)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }
}

/// Image cross-covariance `E23 = UᵀX`, `E23_aj = Σ_k u_ka·x_kj`.
pub fn image_covariance(cloud: &PointCloud, image: &OrthoImage) -> Result<[Vec3; 2]> {
    check_pair(cloud.as_mat(), image.as_mat(), 3, 2, 1)?;
    let mut e = [[0.0; 3]; 2];
    for k in 0..cloud.len() {
        let (x, u) = (cloud.point(k), image.point(k));
        for a in 0..2 {
            for j in 0..3 {
                e[a][j] += u[a] * x[j];
            }
        }
    }
    Ok(e)
}

/// Symmetric traceless 4×4 matrix whose maximal eigenvector is the
/// optimal quaternion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileMatrix(pub Mat4);

impl ProfileMatrix {
    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }
}

pub fn build_profile_matrix(e: &CrossCovariance) -> ProfileMatrix {
    ProfileMatrix(profile_matrix(&e.0))
}

/// `B = Σ_k A_kᵀA_k`, positive semidefinite; its minimal eigenvector is the
/// optimal quaternion and the minimal eigenvalue is zero for exact data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BMatrix(pub Mat4);

impl BMatrix {
    pub fn new(cloud: &PointCloud, target: &TargetCloud) -> Result<Self> {
        check_pair(cloud.as_mat(), target.as_mat(), 3, 3, 1)?;
        Ok(Self::from_mats(cloud.as_mat(), target.as_mat()))
    }

    pub(crate) fn from_mats(cloud: &Mat, target: &Mat) -> Self {
        let mut b = [[0.0; 4]; 4];
        for k in 0..cloud.rows() {
            let a = a_matrix(cloud.row(k), target.row(k));
            for i in 0..4 {
                for j in i..4 {
                    b[i][j] += (0..4).map(|r| a[r][i] * a[r][j]).sum::<f64>();
                }
            }
        }
        for i in 0..4 {
            for j in 0..i {
                b[i][j] = b[j][i];
            }
        }
        BMatrix(b)
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }
}

/// Antisymmetric per-point matrix with `A_k·q = 0` when `y_k = R(q)·x_k`.
fn a_matrix(p: &[f64], t: &[f64]) -> Mat4 {
    let (x, y, z) = (p[0], p[1], p[2]);
    let (u, v, w) = (t[0], t[1], t[2]);
    [
        [0.0, u - x, v - y, w - z],
        [x - u, 0.0, z + w, -y - v],
        [y - v, -z - w, 0.0, x + u],
        [z - w, y + v, -x - u, 0.0],
    ]
}

/// A rotation estimate with its score.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseEstimate {
    pub rotation: Rotation3,
    pub method: Method,
    pub problem: Problem,
    pub loss: LossValue,
    /// `‖RᵀR − I‖_F`
    pub orthonormality_defect: f64,
    pub angle_dev_from_argmin: Option<f64>,
    /// Extreme eigenvalue for the quaternion eigenvector methods.
    pub eigenvalue: Option<f64>,
    pub wall_time_ns: Option<u64>,
}

impl PoseEstimate {
    pub fn enp(rotation: Rotation3, method: Method, cloud: &PointCloud, target: &TargetCloud) -> Result<Self> {
        let loss = enp_loss(rotation.matrix(), cloud, target)?;
        Ok(Self::assemble(rotation, method, Problem::Enp, loss))
    }

    pub fn onp(rotation: Rotation3, method: Method, cloud: &PointCloud, image: &OrthoImage) -> Result<Self> {
        let loss = onp_loss(rotation.matrix(), cloud, image)?;
        Ok(Self::assemble(rotation, method, Problem::Onp, loss))
    }

    fn assemble(rotation: Rotation3, method: Method, problem: Problem, loss: LossValue) -> Self {
        PoseEstimate {
            orthonormality_defect: orthonormality_defect(rotation.matrix()),
            rotation,
            method,
            problem,
            loss,
            angle_dev_from_argmin: None,
            eigenvalue: None,
            wall_time_ns: None,
        }
    }

    /// Records the angle to a reference (normally the ArgMin rotation).
    pub fn with_reference(mut self, reference: &Rotation3) -> Self {
        self.angle_dev_from_argmin = Some(rotation_angle_between(self.rotation.matrix(), reference.matrix()));
        self
    }

    fn with_eigenvalue(mut self, eps: f64) -> Self {
        self.eigenvalue = Some(eps);
        self
    }
}

// ---------------------------------------------------------------------------
// Rotation kernels on precomputed statistics

/// Maximal-eigenvector quaternion of `M(E)`. Returns the rotation and the
/// eigenvalue.
pub fn qmax_rotation(e: &Mat3) -> Result<(Rotation3, f64)> {
    let (q, eps) = eigen_quaternion(&profile_matrix(e), Extreme::Max)?;
    Ok((quat_to_rot(q)?, eps))
}

/// Minimal-eigenvector quaternion of `B`. Returns the rotation and the
/// eigenvalue.
pub fn qmin_rotation(b: &BMatrix) -> Result<(Rotation3, f64)> {
    let (q, eps) = eigen_quaternion(&b.0, Extreme::Min)?;
    Ok((quat_to_rot(q)?, eps))
}

/// `E = U·S·Vᵀ ⇒ R = V·D·Uᵀ`, `D = diag(1, 1, sign(det U·det V))`.
pub fn svd_rotation(e: &Mat3) -> Rotation3 {
    let (u, _, v) = svd3(e);
    let d = if det3(&u) * det3(&v) < 0.0 { -1.0 } else { 1.0 };
    let mut r = [[0.0; 3]; 3];
    for (i, row) in r.iter_mut().enumerate() {
        for (j, out) in row.iter_mut().enumerate() {
            *out = v[i][0] * u[j][0] + v[i][1] * u[j][1] + d * v[i][2] * u[j][2];
        }
    }
    Rotation3::new_unchecked(r)
}

/// Polar-decomposition rotation from `E`.
///
/// Fails with `SingularCovariance` when the needed inverse does not exist
/// and with `DegenerateInput` when `det E < 0`, where both formulas
/// return a reflection.
pub fn hhn_rotation(e: &Mat3, variant: HhnVariant) -> Result<Rotation3> {
    let et = mat3_transpose(e);
    let ete = mat3_mul(&et, e);
    let r = match variant {
        HhnVariant::Minus => {
            let inv_sqrt = sym_matrix_power(&ete, HalfPower::InvSqrt).map_err(|_| PoseError::SingularCovariance)?;
            mat3_mul(&inv_sqrt, &et)
        }
        HhnVariant::Plus => {
            let scale = frobenius(e);
            if scale == 0.0 || det3(e).abs() < 1e-12 * scale * scale * scale {
                return Err(PoseError::SingularCovariance);
            }
            let inv = crate::linalg::inverse3(e).map_err(|_| PoseError::SingularCovariance)?;
            let sqrt = sym_matrix_power(&ete, HalfPower::Sqrt)?;
            mat3_mul(&sqrt, &inv)
        }
    };
    if det3(e) < 0.0 {
        return Err(PoseError::DegenerateInput(
            "cross-covariance has negative determinant; the polar factor is a reflection".into(),
        ));
    }
    Rotation3::new(r).map_err(|_| PoseError::SingularCovariance)
}

// ---------------------------------------------------------------------------
// 3D solvers

pub fn solve_qmax(cloud: &PointCloud, target: &TargetCloud) -> Result<PoseEstimate> {
    check_pair(cloud.as_mat(), target.as_mat(), 3, 3, MIN_POINTS_ENP)?;
    let e = CrossCovariance::from_mats(cloud.as_mat(), target.as_mat());
    let (r, eps) = qmax_rotation(&e.0)?;
    Ok(PoseEstimate::enp(r, Method::Qmax, cloud, target)?.with_eigenvalue(eps))
}

pub fn solve_qmin(cloud: &PointCloud, target: &TargetCloud) -> Result<PoseEstimate> {
    check_pair(cloud.as_mat(), target.as_mat(), 3, 3, MIN_POINTS_ENP)?;
    let b = BMatrix::from_mats(cloud.as_mat(), target.as_mat());
    let (r, eps) = qmin_rotation(&b)?;
    Ok(PoseEstimate::enp(r, Method::Qmin, cloud, target)?.with_eigenvalue(eps))
}

pub fn solve_svd(cloud: &PointCloud, target: &TargetCloud) -> Result<PoseEstimate> {
    check_pair(cloud.as_mat(), target.as_mat(), 3, 3, MIN_POINTS_ENP)?;
    let e = CrossCovariance::from_mats(cloud.as_mat(), target.as_mat());
    PoseEstimate::enp(svd_rotation(&e.0), Method::Svd, cloud, target)
}

pub fn solve_hhn(cloud: &PointCloud, target: &TargetCloud, variant: HhnVariant) -> Result<PoseEstimate> {
    check_pair(cloud.as_mat(), target.as_mat(), 3, 3, MIN_POINTS_ENP)?;
    let e = CrossCovariance::from_mats(cloud.as_mat(), target.as_mat());
    PoseEstimate::enp(hhn_rotation(&e.0, variant)?, Method::Hhn, cloud, target)
}

// ---------------------------------------------------------------------------
// Image adaptations

/// Rotation from a closed-form least-squares solver run on image data.
///
/// * `Qmin` lifts the image to the plane `z = 1` and solves the 3D problem;
/// * `Qmax` uses the profile matrix of the 2×3 image covariance;
/// * `Svd` and `Hhn` take the polar factor of the 2×3 image covariance.
///
/// The first two rows come out optimal for the lifted 3D problem, which is
/// not the image problem, so these rotations are generally far from the
/// image-loss optimum even on exact data.
pub fn onp_adapted_rotation(cloud: &PointCloud, image: &OrthoImage, method: Method) -> Result<Rotation3> {
    check_pair(cloud.as_mat(), image.as_mat(), 3, 2, MIN_POINTS_ONP)?;
    match method {
        Method::Qmin => {
            let lifted = lift_ortho_to_plane(image, DEFAULT_LIFT_Z);
            Ok(qmin_rotation(&BMatrix::from_mats(cloud.as_mat(), lifted.as_mat()))?.0)
        }
        Method::Qmax => {
            let e23 = image_covariance(cloud, image)?;
            let (q, _) = eigen_quaternion(&profile_matrix_23(&e23), Extreme::Max)?;
            Ok(quat_to_rot(q)?.transpose())
        }
        Method::Svd => {
            let e23 = image_covariance(cloud, image)?;
            let s = svd(&Mat::from_rows(&e23))?;
            // P = U·[I₂ 0]·Vᵀ
            let p: [Vec3; 2] = std::array::from_fn(|i| {
                std::array::from_fn(|j| (0..2).map(|k| s.u[(i, k)] * s.v[(j, k)]).sum())
            });
            extend_partial_rotation(&PartialRotation23(p))
        }
        Method::Hhn => {
            let e23 = image_covariance(cloud, image)?;
            let mut ete = [[0.0; 3]; 3];
            for (i, row) in ete.iter_mut().enumerate() {
                for (j, out) in row.iter_mut().enumerate() {
                    *out = e23[0][i] * e23[0][j] + e23[1][i] * e23[1][j];
                }
            }
            let w = sym_pinv_sqrt(&ete);
            let p: [Vec3; 2] =
                std::array::from_fn(|a| std::array::from_fn(|j| (0..3).map(|k| e23[a][k] * w[k][j]).sum()));
            extend_partial_rotation(&PartialRotation23(p))
        }
        other => Err(PoseError::InvalidArgument(format!("{other} has no image adaptation"))),
    }
}

pub fn solve_onp_adapted(cloud: &PointCloud, image: &OrthoImage, method: Method) -> Result<PoseEstimate> {
    let r = onp_adapted_rotation(cloud, image, method)?;
    PoseEstimate::onp(r, method, cloud, image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mat3_identity, mat3_max_abs_diff, sym_eigen4};
    use crate::simulate::{generate_trial, TrialData};

    fn trial(id: u64, sigma: f64) -> TrialData {
        generate_trial(2024, id, 8, sigma).unwrap()
    }

    fn angle(a: &Rotation3, b: &Rotation3) -> f64 {
        rotation_angle_between(a.matrix(), b.matrix())
    }

    #[test]
    fn profile_of_identity() {
        let m = build_profile_matrix(&CrossCovariance(mat3_identity()));
        let want = [[3.0, 0.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [0.0, 0.0, 0.0, -1.0]];
        assert_eq!(m.0, want);
    }

    #[test]
    fn profile_of_antisymmetric() {
        let m = build_profile_matrix(&CrossCovariance([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]));
        for i in 0..4 {
            for j in 0..4 {
                let want = if (i, j) == (0, 3) || (i, j) == (3, 0) { 2.0 } else { 0.0 };
                assert_eq!(m.0[i][j], want, "({i},{j})");
            }
        }
    }

    #[test]
    fn profile_max_eigenvalue_is_cloud_trace() {
        let t = trial(1, 0.0);
        let e = CrossCovariance::new(&t.cloud, &t.target).unwrap();
        let m = build_profile_matrix(&e);
        let tr: f64 = (0..8).map(|k| t.cloud.point(k).iter().map(|v| v * v).sum::<f64>()).sum();
        let top = sym_eigen4(&m.0).unwrap().values[0];
        assert!((top - tr).abs() < 1e-12 * tr);
        let trace: f64 = (0..4).map(|i| m.0[i][i]).sum();
        assert!(trace.abs() < 1e-12 * tr);
    }

    #[test]
    fn exact_data_recovers_rotation() {
        for id in 0..20 {
            let t = trial(id, 0.0);
            let solved = [
                solve_qmax(&t.cloud, &t.target).unwrap(),
                solve_qmin(&t.cloud, &t.target).unwrap(),
                solve_svd(&t.cloud, &t.target).unwrap(),
                solve_hhn(&t.cloud, &t.target, HhnVariant::Minus).unwrap(),
                solve_hhn(&t.cloud, &t.target, HhnVariant::Plus).unwrap(),
            ];
            for est in &solved {
                assert!(
                    mat3_max_abs_diff(est.rotation.matrix(), t.rotation.matrix()) < 1e-9,
                    "{} trial {id}",
                    est.method
                );
                assert!(est.loss.value() < 1e-18);
            }
        }
    }

    #[test]
    fn b_annihilates_identity_quaternion_on_exact_data() {
        let t = trial(3, 0.0);
        let target = TargetCloud::new(t.cloud.as_mat().clone());
        let b = BMatrix::new(&t.cloud, &target).unwrap();
        for row in b.0 {
            assert!(row[0].abs() < 1e-14);
        }
    }

    #[test]
    fn qmin_eigenvalue_vanishes_on_exact_data() {
        let t = trial(4, 0.0);
        let est = solve_qmin(&t.cloud, &t.target).unwrap();
        let b = BMatrix::new(&t.cloud, &t.target).unwrap();
        let tr: f64 = (0..4).map(|i| b.0[i][i]).sum();
        assert!(est.eigenvalue.unwrap().abs() < 1e-10 * tr);
    }

    #[test]
    fn noisy_solvers_agree() {
        for id in 0..20 {
            let t = trial(id, 0.1);
            let qmax = solve_qmax(&t.cloud, &t.target).unwrap().rotation;
            for other in [
                solve_qmin(&t.cloud, &t.target).unwrap().rotation,
                solve_svd(&t.cloud, &t.target).unwrap().rotation,
                solve_hhn(&t.cloud, &t.target, HhnVariant::Minus).unwrap().rotation,
            ] {
                assert!(angle(&qmax, &other) < 1e-8);
            }
        }
    }

    #[test]
    fn svd_guards_against_reflection() {
        let e = [[1.0, 0.2, 0.0], [0.1, 2.0, 0.3], [0.0, -0.4, -3.0]];
        assert!(det3(&e) < 0.0);
        let r = svd_rotation(&e);
        assert!((det3(r.matrix()) - 1.0).abs() < 1e-12);
        assert!(orthonormality_defect(r.matrix()) < 1e-12);
        assert!(matches!(hhn_rotation(&e, HhnVariant::Minus), Err(PoseError::DegenerateInput(_))));
    }

    #[test]
    fn hhn_identity_and_variants() {
        let r = hhn_rotation(&mat3_identity(), HhnVariant::Minus).unwrap();
        assert!(mat3_max_abs_diff(r.matrix(), &mat3_identity()) < 1e-15);
        let e = [[2.0, 0.3, -0.1], [0.2, 1.5, 0.4], [0.0, -0.3, 1.1]];
        let a = hhn_rotation(&e, HhnVariant::Minus).unwrap();
        let b = hhn_rotation(&e, HhnVariant::Plus).unwrap();
        assert!(mat3_max_abs_diff(a.matrix(), b.matrix()) < 1e-9);
        assert!(mat3_max_abs_diff(a.matrix(), svd_rotation(&e).matrix()) < 1e-9);
    }

    #[test]
    fn hhn_rejects_singular_covariance() {
        let e = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]];
        assert_eq!(hhn_rotation(&e, HhnVariant::Minus), Err(PoseError::SingularCovariance));
        assert_eq!(hhn_rotation(&e, HhnVariant::Plus), Err(PoseError::SingularCovariance));
    }

    #[test]
    fn collinear_cloud_is_ambiguous() {
        let cloud = PointCloud::from_rows(&[[1.0, 0.0, 0.0], [-2.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let target = TargetCloud::new(cloud.as_mat().clone());
        assert!(matches!(solve_qmax(&cloud, &target), Err(PoseError::DegenerateInput(_))));
        assert!(matches!(solve_qmin(&cloud, &target), Err(PoseError::DegenerateInput(_))));
    }

    #[test]
    fn image_adaptations_agree_and_are_proper() {
        for id in 0..10 {
            let t = trial(id, 0.0);
            let rs: Vec<Rotation3> = [Method::Qmin, Method::Qmax, Method::Svd, Method::Hhn]
                .into_iter()
                .map(|m| onp_adapted_rotation(&t.cloud, &t.image, m).unwrap())
                .collect();
            for r in &rs {
                assert!(orthonormality_defect(r.matrix()) < 1e-10);
                assert!((det3(r.matrix()) - 1.0).abs() < 1e-10);
                assert!(angle(r, &rs[2]) < 1e-6, "trial {id}");
            }
        }
    }

    #[test]
    fn image_adaptation_rejects_other_methods() {
        let t = trial(0, 0.0);
        assert!(matches!(
            onp_adapted_rotation(&t.cloud, &t.image, Method::Dram),
            Err(PoseError::InvalidArgument(_))
        ));
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }
}
