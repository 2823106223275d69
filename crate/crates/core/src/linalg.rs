//! Small dense linear algebra used by every solver.
//!
//! Fixed 3×3 and 4×4 matrices are plain nested arrays (`Mat3`, `Mat4`);
//! anything with a data-dependent shape (point clouds, N-dimensional
//! covariances, rectangular candidates) uses the row-major [`Mat`].
//!
//! The decompositions are all Jacobi-style: cyclic Jacobi for symmetric
//! eigenproblems and one-sided (Hestenes) Jacobi for the SVD. At the sizes
//! used here (n ≤ 8) they converge in a handful of sweeps and are accurate
//! to working precision even for clustered spectra.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{PoseError, Result};

pub type Vec3 = [f64; 3];
pub type Vec4 = [f64; 4];
pub type Mat3 = [[f64; 3]; 3];
pub type Mat4 = [[f64; 4]; 4];

/// Relative tolerance on the singular-value ratio below which a matrix is
/// treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Relative tolerance used by [`sym_eigen4`] to reject asymmetric input.
pub const SYMMETRY_TOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 50;
const JACOBI_OFF_TOL: f64 = 1e-14;

// ---------------------------------------------------------------------------
// Fixed-size helpers

pub fn mat3_identity() -> Mat3 {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    c
}

pub fn mat3_transpose(a: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

pub fn mat3_mul_vec(a: &Mat3, x: &Vec3) -> Vec3 {
    [
        a[0][0] * x[0] + a[0][1] * x[1] + a[0][2] * x[2],
        a[1][0] * x[0] + a[1][1] * x[1] + a[1][2] * x[2],
        a[2][0] * x[0] + a[2][1] * x[1] + a[2][2] * x[2],
    ]
}

pub fn mat3_scale(a: &Mat3, s: f64) -> Mat3 {
    a.map(|row| row.map(|v| v * s))
}

/// Frobenius norm of `a - b`.
pub fn mat3_frobenius_diff(a: &Mat3, b: &Mat3) -> f64 {
    let mut acc = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let d = a[i][j] - b[i][j];
            acc += d * d;
        }
    }
    acc.sqrt()
}

pub fn mat3_max_abs_diff(a: &Mat3, b: &Mat3) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

/// `‖AᵀA − I‖_F`, zero exactly for orthogonal matrices.
pub fn orthonormality_defect(a: &Mat3) -> f64 {
    let ata = mat3_mul(&mat3_transpose(a), a);
    mat3_frobenius_diff(&ata, &mat3_identity())
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm<const N: usize>(a: &[f64; N]) -> f64 {
    dot(a, a).sqrt()
}

/// Determinant of a 3×3 matrix by cofactor expansion along the first row.
pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Inverse of a 3×3 matrix through its adjugate. Fails when
/// `|det| ≤ 1e-12·‖m‖³`.
pub fn inverse3(m: &Mat3) -> Result<Mat3> {
    let d = det3(m);
    let scale = frobenius(m).powi(3);
    if !d.is_finite() || d.abs() <= 1e-12 * scale || scale == 0.0 {
        return Err(PoseError::SingularMatrix);
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            // inv[i][j] = cofactor(j, i) / det
            let (r0, r1) = other_two(j);
            let (c0, c1) = other_two(i);
            let minor = m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            inv[i][j] = sign * minor / d;
        }
    }
    Ok(inv)
}

fn other_two(i: usize) -> (usize, usize) {
    match i {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

pub fn frobenius<const R: usize, const C: usize>(m: &[[f64; C]; R]) -> f64 {
    m.iter()
        .flat_map(|row| row.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Transpose-cofactor matrix of a 4×4 matrix; `m·adj(m) = det(m)·I`.
pub fn adjugate4(m: &Mat4) -> Mat4 {
    let mut adj = [[0.0; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            let mut minor = [[0.0; 3]; 3];
            let mut mi = 0;
            for i in 0..4 {
                if i == r {
                    continue;
                }
                let mut mj = 0;
                for j in 0..4 {
                    if j == c {
                        continue;
                    }
                    minor[mi][mj] = m[i][j];
                    mj += 1;
                }
                mi += 1;
            }
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            // cofactor (r, c) lands at (c, r)
            adj[c][r] = sign * det3(&minor);
        }
    }
    adj
}

pub fn det4(m: &Mat4) -> f64 {
    let adj = adjugate4(m);
    (0..4).map(|j| m[0][j] * adj[j][0]).sum()
}

// ---------------------------------------------------------------------------
// Dynamic matrix

/// Dense row-major matrix with runtime shape.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    /// Builds a matrix from row-major data. All entries must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(PoseError::InvalidArgument(format!(
                "matrix shape {rows}x{cols} must be non-empty"
            )));
        }
        if data.len() != rows * cols {
            return Err(PoseError::SizeMismatch {
                expected: format!("{} entries", rows * cols),
                found: format!("{} entries", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(PoseError::NonFinite);
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_rows<const C: usize>(rows: &[[f64; C]]) -> Self {
        Mat {
            rows: rows.len(),
            cols: C,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    pub fn from_mat3(m: &Mat3) -> Self {
        Mat::from_rows(m)
    }

    /// Returns the 3×3 array form, or `None` for any other shape.
    pub fn to_mat3(&self) -> Option<Mat3> {
        if self.rows != 3 || self.cols != 3 {
            return None;
        }
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row.copy_from_slice(self.row(i));
        }
        Some(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Matrix product; panics on inner-dimension mismatch.
    pub fn matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimension mismatch");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    pub fn tr_matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.rows, rhs.rows, "tr_matmul row mismatch");
        let mut out = Mat::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = rhs.row(k);
            for i in 0..self.cols {
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a[i] * b[j];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, rhs: &Mat) -> f64 {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch");
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Top `n` rows as a new matrix.
    pub fn top_rows(&self, n: usize) -> Mat {
        assert!(n <= self.rows);
        Mat {
            rows: n,
            cols: self.cols,
            data: self.data[..n * self.cols].to_vec(),
        }
    }

    /// Determinant by LU factorization with partial pivoting.
    pub fn det(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "determinant of non-square matrix");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
                .unwrap();
            if a[p * n + k] == 0.0 {
                return 0.0;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                det = -det;
            }
            let pivot = a[k * n + k];
            det *= pivot;
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                if f == 0.0 {
                    continue;
                }
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
        det
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Mat> {
        if self.rows != self.cols {
            return Err(PoseError::InvalidArgument("inverse of non-square matrix".into()));
        }
        let n = self.rows;
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Err(PoseError::SingularMatrix);
        }
        let mut a = self.data.clone();
        let mut inv = Mat::identity(n).data;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
                .unwrap();
            if a[p * n + k].abs() <= 1e-14 * scale {
                return Err(PoseError::SingularMatrix);
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                    inv.swap(k * n + j, p * n + j);
                }
            }
            let pivot = a[k * n + k];
            for j in 0..n {
                a[k * n + j] /= pivot;
                inv[k * n + j] /= pivot;
            }
            for i in 0..n {
                if i == k {
                    continue;
                }
                let f = a[i * n + k];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[i * n + j] -= f * a[k * n + j];
                    inv[i * n + j] -= f * inv[k * n + j];
                }
            }
        }
        Ok(Mat {
            rows: n,
            cols: n,
            data: inv,
        })
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition

/// Eigendecomposition of a symmetric N×N matrix.
///
/// `values` are sorted descending and `vectors[i]` is the unit eigenvector
/// belonging to `values[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymEigen<const N: usize> {
    pub values: [f64; N],
    pub vectors: [[f64; N]; N],
}

pub type SymEigenResult = SymEigen<4>;

/// Cyclic Jacobi on a row-major n×n buffer. On return `a` is (numerically)
/// diagonal and the columns of `v` are the eigenvectors.
fn jacobi_eigen_in_place(a: &mut [f64], v: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = if i == j { 1.0 } else { 0.0 };
        }
    }
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    let tol = JACOBI_OFF_TOL * norm;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += 2.0 * a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
}

/// Symmetric eigendecomposition of a fixed-size matrix. Only the
/// symmetric part of `m` is used.
pub fn sym_eigen<const N: usize>(m: &[[f64; N]; N]) -> SymEigen<N> {
    let mut a = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..N {
            a[i][j] = 0.5 * (m[i][j] + m[j][i]);
        }
    }
    let mut v = [[0.0; N]; N];
    jacobi_eigen_in_place(a.as_flattened_mut(), v.as_flattened_mut(), N);

    let mut order: [usize; N] = std::array::from_fn(|i| i);
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.map(|i| a[i][i]);
    let vectors = order.map(|c| {
        let mut col: [f64; N] = std::array::from_fn(|r| v[r][c]);
        let n = norm(&col);
        col.iter_mut().for_each(|x| *x /= n);
        col
    });
    SymEigen { values, vectors }
}

/// Largest absolute asymmetry `|m_ij − m_ji|`.
pub fn asymmetry<const N: usize>(m: &[[f64; N]; N]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..N {
        for j in i + 1..N {
            worst = worst.max((m[i][j] - m[j][i]).abs());
        }
    }
    worst
}

/// Full eigendecomposition of a symmetric 4×4 matrix, eigenvalues descending.
pub fn sym_eigen4(m: &Mat4) -> Result<SymEigenResult> {
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(PoseError::NonFinite);
    }
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL * frobenius(m).max(f64::MIN_POSITIVE) {
        return Err(PoseError::NotSymmetric { asymmetry: asym });
    }
    Ok(sym_eigen(m))
}

// ---------------------------------------------------------------------------
// SVD

/// Full singular value decomposition `m = U·diag(S)·Vᵀ`.
///
/// `u` is p×p, `v` is q×q and `s` holds min(p, q) values in descending
/// order. Each singular pair is signed so that the largest-magnitude entry
/// of the corresponding column of `v` is positive.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

/// One-sided Jacobi on a column-major m×n buffer (m ≥ n). Columns of `a`
/// end up mutually orthogonal; `v` (column-major n×n) accumulates the
/// rotations.
fn one_sided_jacobi(a: &mut [f64], m: usize, n: usize, v: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            v[j * n + i] = if i == j { 1.0 } else { 0.0 };
        }
    }
    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for k in 0..m {
                    let ap = a[p * m + k];
                    let aq = a[q * m + k];
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let ap = a[p * m + k];
                    let aq = a[q * m + k];
                    a[p * m + k] = c * ap - s * aq;
                    a[q * m + k] = s * ap + c * aq;
                }
                for k in 0..n {
                    let vp = v[p * n + k];
                    let vq = v[q * n + k];
                    v[p * n + k] = c * vp - s * vq;
                    v[q * n + k] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

/// Fills the columns of a column-major m×m buffer not flagged in `filled`
/// with unit vectors orthogonal to everything before them (Gram-Schmidt
/// over the standard basis).
fn complete_basis(u: &mut [f64], m: usize, filled: &mut [bool]) {
    for j in 0..m {
        if filled[j] {
            continue;
        }
        let mut best: Option<Vec<f64>> = None;
        let mut best_norm = 0.0;
        for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            // two passes of modified Gram-Schmidt for stability
            for _ in 0..2 {
                for c in 0..m {
                    if !filled[c] {
                        continue;
                    }
                    let col = &u[c * m..(c + 1) * m];
                    let d: f64 = col.iter().zip(&cand).map(|(a, b)| a * b).sum();
                    for k in 0..m {
                        cand[k] -= d * col[k];
                    }
                }
            }
            let nrm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm > best_norm {
                best_norm = nrm;
                best = Some(cand);
            }
        }
        let cand = best.expect("basis completion always finds a candidate");
        for k in 0..m {
            u[j * m + k] = cand[k] / best_norm;
        }
        filled[j] = true;
    }
}

/// SVD of a tall-or-square m×n matrix given column-major.
fn svd_tall(mut a: Vec<f64>, m: usize, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    one_sided_jacobi(&mut a, m, n, &mut v);

    let norms: Vec<f64> = (0..n)
        .map(|j| a[j * m..(j + 1) * m].iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let smax = norms[order[0]];

    let mut u = vec![0.0; m * m];
    let mut vs = vec![0.0; n * n];
    let mut s = vec![0.0; n];
    let mut filled = vec![false; m];
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = norms[src];
        vs[dst * n..(dst + 1) * n].copy_from_slice(&v[src * n..(src + 1) * n]);
        if norms[src] > 1e-14 * smax && norms[src] > 0.0 {
            for k in 0..m {
                u[dst * m + k] = a[src * m + k] / norms[src];
            }
            filled[dst] = true;
        }
    }
    complete_basis(&mut u, m, &mut filled);
    (u, s, vs)
}

/// Singular value decomposition of a small dense matrix.
pub fn svd(m: &Mat) -> Result<SvdResult> {
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(PoseError::NonFinite);
    }
    let (p, q) = m.shape();
    let transposed = p < q;
    let (rows, cols) = if transposed { (q, p) } else { (p, q) };
    // column-major copy of the tall orientation
    let mut a = vec![0.0; rows * cols];
    for j in 0..cols {
        for i in 0..rows {
            a[j * rows + i] = if transposed { m[(j, i)] } else { m[(i, j)] };
        }
    }
    let (ut, s, vt) = svd_tall(a, rows, cols);
    // ut: rows×rows, vt: cols×cols (column-major)
    let colmajor = |buf: &[f64], n: usize| Mat::from_fn(n, n, |i, j| buf[j * n + i]);
    let (mut u, mut v) = if transposed {
        (colmajor(&vt, cols), colmajor(&ut, rows))
    } else {
        (colmajor(&ut, rows), colmajor(&vt, cols))
    };
    fix_singular_signs(&mut u, &mut v, s.len());
    Ok(SvdResult { u, s, v })
}

fn fix_singular_signs(u: &mut Mat, v: &mut Mat, k: usize) {
    for j in 0..k {
        let mut best = 0.0_f64;
        for i in 0..v.rows() {
            if v[(i, j)].abs() > best.abs() {
                best = v[(i, j)];
            }
        }
        if best < 0.0 {
            for i in 0..v.rows() {
                v[(i, j)] = -v[(i, j)];
            }
            for i in 0..u.rows() {
                u[(i, j)] = -u[(i, j)];
            }
        }
    }
}

/// Allocation-free SVD of a 3×3 matrix: returns `(U, S, V)` with
/// `m = U·diag(S)·Vᵀ`, using the same conventions as [`svd`].
pub fn svd3(m: &Mat3) -> (Mat3, Vec3, Mat3) {
    let mut a = [0.0; 9];
    for j in 0..3 {
        for i in 0..3 {
            a[j * 3 + i] = m[i][j];
        }
    }
    let mut v = [0.0; 9];
    one_sided_jacobi(&mut a, 3, 3, &mut v);
    let norms: [f64; 3] =
        std::array::from_fn(|j| (a[j * 3] * a[j * 3] + a[j * 3 + 1] * a[j * 3 + 1] + a[j * 3 + 2] * a[j * 3 + 2]).sqrt());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let smax = norms[order[0]];

    let mut u = [0.0; 9];
    let mut vs = [[0.0; 3]; 3];
    let mut s = [0.0; 3];
    let mut filled = [false; 3];
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = norms[src];
        for k in 0..3 {
            vs[k][dst] = v[src * 3 + k];
        }
        if norms[src] > 1e-14 * smax && norms[src] > 0.0 {
            for k in 0..3 {
                u[dst * 3 + k] = a[src * 3 + k] / norms[src];
            }
            filled[dst] = true;
        }
    }
    if filled.iter().any(|f| !f) {
        complete_basis(&mut u, 3, &mut filled);
    }
    let mut um = [[0.0; 3]; 3];
    for j in 0..3 {
        for i in 0..3 {
            um[i][j] = u[j * 3 + i];
        }
    }
    for j in 0..3 {
        let mut best = 0.0_f64;
        for row in &vs {
            if row[j].abs() > best.abs() {
                best = row[j];
            }
        }
        if best < 0.0 {
            for i in 0..3 {
                vs[i][j] = -vs[i][j];
                um[i][j] = -um[i][j];
            }
        }
    }
    (um, s, vs)
}

// ---------------------------------------------------------------------------
// QR and pseudoinverse

fn singular_ratio(s: &[f64]) -> f64 {
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

fn check_full_column_rank_gram(gram: &Mat) -> Result<()> {
    let n = gram.rows();
    let mut a = gram.as_slice().to_vec();
    let mut v = vec![0.0; n * n];
    jacobi_eigen_in_place(&mut a, &mut v, n);
    let eig: Vec<f64> = (0..n).map(|i| a[i * n + i].max(0.0).sqrt()).collect();
    let ratio = singular_ratio(&eig);
    if ratio < RANK_TOL {
        return Err(PoseError::RankDeficient { ratio });
    }
    Ok(())
}

/// Householder QR of a K×n matrix: returns `(S, T)` with `x = Sᵀ·T`,
/// `S` n×K with orthonormal rows and `T` n×n upper triangular with a
/// non-negative diagonal.
pub fn qr_decompose(x: &Mat) -> Result<(Mat, Mat)> {
    let (k, n) = x.shape();
    if k < n {
        return Err(PoseError::RankDeficient { ratio: 0.0 });
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(PoseError::NonFinite);
    }
    let mut r = x.clone();
    // Householder vectors, one per column
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let alpha_norm = (j..k).map(|i| r[(i, j)] * r[(i, j)]).sum::<f64>().sqrt();
        let mut hv = vec![0.0; k];
        if alpha_norm == 0.0 {
            vs.push(hv);
            continue;
        }
        let alpha = if r[(j, j)] > 0.0 { -alpha_norm } else { alpha_norm };
        for i in j..k {
            hv[i] = r[(i, j)];
        }
        hv[j] -= alpha;
        let hn = hv.iter().map(|v| v * v).sum::<f64>().sqrt();
        if hn > 0.0 {
            hv.iter_mut().for_each(|v| *v /= hn);
            for c in j..n {
                let d: f64 = (j..k).map(|i| hv[i] * r[(i, c)]).sum();
                for i in j..k {
                    r[(i, c)] -= 2.0 * d * hv[i];
                }
            }
        }
        vs.push(hv);
    }
    let mut t = Mat::from_fn(n, n, |i, j| if j >= i { r[(i, j)] } else { 0.0 });

    // Thin Q (K×n): apply reflectors in reverse to the first n unit columns.
    let mut q = Mat::from_fn(k, n, |i, j| if i == j { 1.0 } else { 0.0 });
    for j in (0..n).rev() {
        let hv = &vs[j];
        for c in 0..n {
            let d: f64 = (j..k).map(|i| hv[i] * q[(i, c)]).sum();
            if d != 0.0 {
                for i in j..k {
                    q[(i, c)] -= 2.0 * d * hv[i];
                }
            }
        }
    }
    let mut s = q.transpose();

    let diag: Vec<f64> = (0..n).map(|i| t[(i, i)].abs()).collect();
    let dmax = diag.iter().copied().fold(0.0, f64::max);
    if dmax == 0.0 {
        return Err(PoseError::RankDeficient { ratio: 0.0 });
    }
    // singular values of T equal those of x
    let tt = t.tr_matmul(&t);
    check_full_column_rank_gram(&tt)?;

    for i in 0..n {
        if t[(i, i)] < 0.0 {
            t.row_mut(i).iter_mut().for_each(|v| *v = -*v);
            s.row_mut(i).iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok((s, t))
}

/// Moore-Penrose pseudoinverse `(XᵀX)⁻¹Xᵀ` of a full-column-rank K×n matrix.
pub fn pseudoinverse(x: &Mat) -> Result<Mat> {
    let (k, n) = x.shape();
    if k < n {
        return Err(PoseError::RankDeficient { ratio: 0.0 });
    }
    let gram = x.tr_matmul(x);
    check_full_column_rank_gram(&gram)?;
    let inv = gram.inverse().map_err(|_| PoseError::RankDeficient { ratio: 0.0 })?;
    Ok(inv.matmul(&x.transpose()))
}

// ---------------------------------------------------------------------------
// Symmetric matrix powers

/// Exponent for [`sym_matrix_power`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HalfPower {
    /// `m^(+1/2)`
    Sqrt,
    /// `m^(−1/2)`
    InvSqrt,
}

/// `V·diag(λ^e)·Vᵀ` for a symmetric positive semidefinite matrix.
///
/// Negative eigenvalues from rounding are clamped to zero. The inverse
/// square root fails with `SingularMatrix` when any eigenvalue is at or
/// below `1e-12·λ_max`.
pub fn sym_matrix_power<const N: usize>(m: &[[f64; N]; N], power: HalfPower) -> Result<[[f64; N]; N]> {
    let eig = sym_eigen(m);
    let lmax = eig.values[0].max(0.0);
    let scaled: [f64; N] = match power {
        HalfPower::Sqrt => eig.values.map(|l| l.max(0.0).sqrt()),
        HalfPower::InvSqrt => {
            if lmax == 0.0 || eig.values.iter().any(|&l| l <= 1e-12 * lmax) {
                return Err(PoseError::SingularMatrix);
            }
            eig.values.map(|l| 1.0 / l.sqrt())
        }
    };
    Ok(reassemble(&eig, &scaled))
}

/// Square root of the pseudoinverse: eigenvalues at or below
/// `1e-12·λ_max` are dropped, the rest map to `λ^(−1/2)`.
pub fn sym_pinv_sqrt<const N: usize>(m: &[[f64; N]; N]) -> [[f64; N]; N] {
    let eig = sym_eigen(m);
    let lmax = eig.values[0].max(0.0);
    let scaled = eig
        .values
        .map(|l| if lmax > 0.0 && l > 1e-12 * lmax { 1.0 / l.sqrt() } else { 0.0 });
    reassemble(&eig, &scaled)
}

fn reassemble<const N: usize>(eig: &SymEigen<N>, scaled: &[f64; N]) -> [[f64; N]; N] {
    let mut out = [[0.0; N]; N];
    for (vec, w) in eig.vectors.iter().zip(scaled) {
        if *w == 0.0 {
            continue;
        }
        for i in 0..N {
            for j in 0..N {
                out[i][j] += w * vec[i] * vec[j];
            }
        }
    }
    out
}
