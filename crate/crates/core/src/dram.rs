//! Determinant-ratio solvers and their matrix-factorization equivalents.
//!
//! For exact data `y_k = R·x_k` every row `R_i` of the rotation solves the
//! 3×3 linear system `R_i·S = m_i`, where `S = XᵀX` holds the self sums
//! (`xx, xy, …`) and `m_i = (Σ y_i·x, Σ y_i·y, Σ y_i·z)` the mixed sums of
//! target coordinate `i`. Cramer's rule turns every entry into a ratio of
//! two determinants, `r_ij = d_ij / d0`.
//!
//! The QR-map and pseudoinverse-map solve the same normal equations
//! through `X = Sᵀ·T` and `X⁺ = (XᵀX)⁻¹·Xᵀ`, so all three agree to
//! rounding on exact and noisy data alike. On noisy data none of them is
//! a rotation; pass the candidate through [`crate::correct`].

use crate::error::{PoseError, Result};
use crate::linalg::{det3, pseudoinverse, qr_decompose, Mat, Mat3, Vec3};
use crate::rmsd::Method;
use crate::simulate::{check_pair, OrthoImage, PointCloud, TargetCloud};

/// Minimum point count for the DRaM class.
pub const MIN_POINTS: usize = 4;

/// Largest dimension accepted by [`solve_dram_nd`].
pub const MAX_DIM: usize = 8;

/// Relative threshold on `d0` against the product of the diagonal self
/// sums.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// The observed side of a correspondence: a 3D target or a 2D image.
#[derive(Clone, Copy, Debug)]
pub enum Observed<'a> {
    Target(&'a TargetCloud),
    Image(&'a OrthoImage),
}

impl Observed<'_> {
    fn mat(&self) -> &Mat {
        match self {
            Observed::Target(t) => t.as_mat(),
            Observed::Image(u) => u.as_mat(),
        }
    }
}

impl<'a> From<&'a TargetCloud> for Observed<'a> {
    fn from(t: &'a TargetCloud) -> Self {
        Observed::Target(t)
    }
}

impl<'a> From<&'a OrthoImage> for Observed<'a> {
    fn from(u: &'a OrthoImage) -> Self {
        Observed::Image(u)
    }
}

/// Self sums of the cloud and mixed sums against each observed
/// coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovarianceSums {
    /// `[[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]]`
    pub self_sums: Mat3,
    /// `mixed[i] = (Σ o_i·x, Σ o_i·y, Σ o_i·z)` for observed coordinate
    /// `o_i` (u, v and, for 3D targets, w).
    pub mixed: [Vec3; 3],
    /// 3 for a 3D target, 2 for an image.
    pub observed_dim: usize,
}

impl CovarianceSums {
    pub fn new<'a>(cloud: &PointCloud, observed: impl Into<Observed<'a>>) -> Result<Self> {
        let observed = observed.into();
        let y = observed.mat();
        check_pair(cloud.as_mat(), y, 3, y.cols(), 1)?;
        if !(2..=3).contains(&y.cols()) {
            return Err(PoseError::SizeMismatch {
                expected: "2 or 3 observed coordinates".into(),
                found: format!("{}", y.cols()),
            });
        }
        Ok(Self::from_mats(cloud.as_mat(), y))
    }

    fn from_mats(x: &Mat, y: &Mat) -> Self {
        let mut s = [[0.0; 3]; 3];
        let mut m = [[0.0; 3]; 3];
        let n = y.cols();
        for k in 0..x.rows() {
            let (p, o) = (x.row(k), y.row(k));
            for a in 0..3 {
                for b in a..3 {
                    s[a][b] += p[a] * p[b];
                }
            }
            for i in 0..n {
                for b in 0..3 {
                    m[i][b] += o[i] * p[b];
                }
            }
        }
        s[1][0] = s[0][1];
        s[2][0] = s[0][2];
        s[2][1] = s[1][2];
        CovarianceSums { self_sums: s, mixed: m, observed_dim: n }
    }

    /// `d0 = det S`.
    pub fn d0(&self) -> f64 {
        det3(&self.self_sums)
    }

    /// `|d0|` must exceed this for the cloud to count as non-degenerate.
    pub fn threshold(&self) -> f64 {
        let s = &self.self_sums;
        DEGENERACY_TOL * (s[0][0] * s[1][1] * s[2][2]).abs()
    }
}

/// Denominator and numerators of a determinant-ratio candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct DramDeterminants {
    pub d0: f64,
    /// `d_ij`, one row per candidate row; candidate = numerators / d0.
    pub numerators: Mat,
}

/// Output of a DRaM-class solver. Not a rotation unless the data was exact.
#[derive(Clone, Debug, PartialEq)]
pub struct DramCandidate {
    /// 3×3 for 3D targets and for [`solve_dram_onp`]; 2×3 for the QR and
    /// pseudoinverse maps of an image; N×N in N dimensions.
    pub matrix: Mat,
    pub method: Method,
    pub determinants: Option<DramDeterminants>,
}

impl DramCandidate {
    pub fn to_mat3(&self) -> Option<Mat3> {
        self.matrix.to_mat3()
    }

    /// Rows of a 2×3 or 3×3 candidate.
    pub fn rows3(&self) -> Vec<Vec3> {
        (0..self.matrix.rows())
            .map(|i| {
                let r = self.matrix.row(i);
                [r[0], r[1], r[2]]
            })
            .collect()
    }
}

fn check_d0(sums: &CovarianceSums) -> Result<f64> {
    let d0 = sums.d0();
    let threshold = sums.threshold();
    if !(d0.abs() > threshold) {
        return Err(PoseError::DegenerateCloud { d0, threshold });
    }
    Ok(d0)
}

/// `(d_i1, d_i2, d_i3)` for mixed row `m`:
/// `det[S2,S3,m]`, `det[S3,S1,m]`, `det[S1,S2,m]`.
fn numerator_row(s: &Mat3, m: &Vec3) -> Vec3 {
    let [s1, s2, s3] = *s;
    [det3(&[s2, s3, *m]), det3(&[s3, s1, *m]), det3(&[s1, s2, *m])]
}

/// Determinant-ratio matrix for a 3D target, straight from the sums.
pub fn dram_enp_matrix(sums: &CovarianceSums) -> Result<(Mat3, DramDeterminants)> {
    if sums.observed_dim != 3 {
        return Err(PoseError::SizeMismatch { expected: "3D target sums".into(), found: "image sums".into() });
    }
    let d0 = check_d0(sums)?;
    let num: Mat3 = std::array::from_fn(|i| numerator_row(&sums.self_sums, &sums.mixed[i]));
    let r = num.map(|row| row.map(|d| d / d0));
    Ok((r, DramDeterminants { d0, numerators: Mat::from_rows(&num) }))
}

/// Determinant-ratio matrix for an image: the two projection rows plus a
/// third row `d̃_3j / d0` with `d̃_3j = det[S_j, m_u, m_v]`, which equals
/// the cross product of the first two rows on exact data.
pub fn dram_onp_matrix(sums: &CovarianceSums) -> Result<(Mat3, DramDeterminants)> {
    if sums.observed_dim != 2 {
        return Err(PoseError::SizeMismatch { expected: "image sums".into(), found: "3D target sums".into() });
    }
    let d0 = check_d0(sums)?;
    let s = &sums.self_sums;
    let (mu, mv) = (sums.mixed[0], sums.mixed[1]);
    let num: Mat3 = [
        numerator_row(s, &mu),
        numerator_row(s, &mv),
        std::array::from_fn(|j| det3(&[s[j], mu, mv])),
    ];
    let r = num.map(|row| row.map(|d| d / d0));
    Ok((r, DramDeterminants { d0, numerators: Mat::from_rows(&num) }))
}

pub fn solve_dram_enp(cloud: &PointCloud, target: &TargetCloud) -> Result<DramCandidate> {
    check_pair(cloud.as_mat(), target.as_mat(), 3, 3, MIN_POINTS)?;
    let sums = CovarianceSums::from_mats(cloud.as_mat(), target.as_mat());
    let (r, det) = dram_enp_matrix(&sums)?;
    Ok(DramCandidate { matrix: Mat::from_mat3(&r), method: Method::Dram, determinants: Some(det) })
}

pub fn solve_dram_onp(cloud: &PointCloud, image: &OrthoImage) -> Result<DramCandidate> {
    check_pair(cloud.as_mat(), image.as_mat(), 3, 2, MIN_POINTS)?;
    let sums = CovarianceSums::from_mats(cloud.as_mat(), image.as_mat());
    let (r, det) = dram_onp_matrix(&sums)?;
    Ok(DramCandidate { matrix: Mat::from_mat3(&r), method: Method::Dram, determinants: Some(det) })
}

fn check_observed(cloud: &PointCloud, y: &Mat) -> Result<()> {
    if !(2..=3).contains(&y.cols()) {
        return Err(PoseError::SizeMismatch {
            expected: "2 or 3 observed coordinates".into(),
            found: format!("{}", y.cols()),
        });
    }
    check_pair(cloud.as_mat(), y, 3, y.cols(), MIN_POINTS)
}

/// QR-map: with `X = Sᵀ·T`, the candidate is `Yᵀ·Sᵀ·T⁻ᵀ` (3×3 for a
/// target, 2×3 for an image).
pub fn solve_qr_map<'a>(cloud: &PointCloud, observed: impl Into<Observed<'a>>) -> Result<DramCandidate> {
    let observed = observed.into();
    let y = observed.mat();
    check_observed(cloud, y)?;
    let (s, t) = qr_decompose(cloud.as_mat())?;
    let t_inv = t.inverse().map_err(|_| PoseError::RankDeficient { ratio: 0.0 })?;
    // (Yᵀ·Sᵀ)·T⁻ᵀ = (S·Y)ᵀ·T⁻ᵀ
    let sy = s.matmul(y);
    let matrix = sy.tr_matmul(&t_inv.transpose());
    Ok(DramCandidate { matrix, method: Method::Qr, determinants: None })
}

/// Pseudoinverse-map: `(X⁺·Y)ᵀ` with `X⁺ = (XᵀX)⁻¹·Xᵀ`.
pub fn solve_pinv_map<'a>(cloud: &PointCloud, observed: impl Into<Observed<'a>>) -> Result<DramCandidate> {
    let observed = observed.into();
    let y = observed.mat();
    check_observed(cloud, y)?;
    let xp = pseudoinverse(cloud.as_mat())?;
    let matrix = xp.matmul(y).transpose();
    Ok(DramCandidate { matrix, method: Method::Pinv, determinants: None })
}

// ---------------------------------------------------------------------------
// N dimensions

fn check_nd(cloud: &PointCloud, y: &Mat, ydim: usize) -> Result<usize> {
    let n = cloud.dim();
    if !(2..=MAX_DIM).contains(&n) {
        return Err(PoseError::InvalidArgument(format!("dimension must be in 2..={MAX_DIM}, got {n}")));
    }
    check_pair(cloud.as_mat(), y, n, ydim.min(n), n + 1)?;
    Ok(n)
}

/// N×N self sums and the (rows×N) mixed sums.
fn nd_sums(x: &Mat, y: &Mat) -> (Mat, Mat) {
    (x.tr_matmul(x), y.tr_matmul(x))
}

/// `d_ij = det(S with column j replaced by mixed row i)`, by LU.
fn nd_determinants(s: &Mat, mixed: &Mat) -> Result<DramDeterminants> {
    let n = s.rows();
    let d0 = s.det();
    let diag: f64 = (0..n).map(|i| s[(i, i)]).product();
    let threshold = DEGENERACY_TOL * diag.abs();
    if !(d0.abs() > threshold) {
        return Err(PoseError::DegenerateCloud { d0, threshold });
    }
    let mut numerators = Mat::zeros(mixed.rows(), n);
    let mut work = s.clone();
    for i in 0..mixed.rows() {
        for j in 0..n {
            for r in 0..n {
                work[(r, j)] = mixed[(i, r)];
            }
            numerators[(i, j)] = work.det();
            for r in 0..n {
                work[(r, j)] = s[(r, j)];
            }
        }
    }
    Ok(DramDeterminants { d0, numerators })
}

/// Determinant-ratio rotation in N dimensions (2 ≤ N ≤ 8, K ≥ N+1).
pub fn solve_dram_nd(cloud: &PointCloud, target: &TargetCloud) -> Result<DramCandidate> {
    let n = check_nd(cloud, target.as_mat(), cloud.dim())?;
    if target.dim() != n {
        return Err(PoseError::SizeMismatch { expected: format!("{n}D target"), found: format!("{}D", target.dim()) });
    }
    let (s, mixed) = nd_sums(cloud.as_mat(), target.as_mat());
    let det = nd_determinants(&s, &mixed)?;
    let matrix = det.numerators.scale(1.0 / det.d0);
    Ok(DramCandidate { matrix, method: Method::Dram, determinants: Some(det) })
}

/// Generalized cross product of N−1 rows of length N: the vector `c` with
/// `det([rows; c]) = ‖c‖²`, orthogonal to every row.
pub fn generalized_cross(rows: &Mat) -> Vec<f64> {
    let n = rows.cols();
    debug_assert_eq!(rows.rows() + 1, n);
    (0..n)
        .map(|j| {
            let minor = Mat::from_fn(n - 1, n - 1, |r, c| rows[(r, if c < j { c } else { c + 1 })]);
            let sign = if (n - 1 + j).is_multiple_of(2) { 1.0 } else { -1.0 };
            if n == 2 {
                sign * minor[(0, 0)]
            } else {
                sign * minor.det()
            }
        })
        .collect()
}

/// Appends the normalized generalized cross product of the rows, giving a
/// square matrix with positive determinant.
pub fn extend_rows(rows: &Mat) -> Result<Mat> {
    let n = rows.cols();
    let c = generalized_cross(rows);
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let row_scale = rows.frobenius() / ((n - 1) as f64).sqrt();
    if !norm.is_finite() || norm < 1e-9 * row_scale.powi(n as i32 - 1) || norm == 0.0 {
        return Err(PoseError::DegenerateRows);
    }
    Ok(Mat::from_fn(n, n, |i, j| if i + 1 < n { rows[(i, j)] } else { c[j] / norm }))
}

/// N-dimensional image variant: the first N−1 rows by determinant ratios,
/// the last by the generalized cross product. Meaningful for exact data;
/// noisy candidates should go through SVD correction of the first N−1
/// rows instead.
pub fn solve_dram_nd_ortho(cloud: &PointCloud, image: &OrthoImage) -> Result<DramCandidate> {
    let n = check_nd(cloud, image.as_mat(), cloud.dim() - 1)?;
    if image.dim() + 1 != n {
        return Err(PoseError::SizeMismatch {
            expected: format!("{}D image", n - 1),
            found: format!("{}D", image.dim()),
        });
    }
    let (s, mixed) = nd_sums(cloud.as_mat(), image.as_mat());
    let det = nd_determinants(&s, &mixed)?;
    let top = det.numerators.scale(1.0 / det.d0);
    let matrix = extend_rows(&top)?;
    Ok(DramCandidate { matrix, method: Method::Dram, determinants: Some(det) })
}
