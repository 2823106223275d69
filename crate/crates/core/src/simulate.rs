//! Deterministic synthetic correspondence data.
//!
//! # Random stream contract
//!
//! All randomness comes from [`SimRng`], a ChaCha8 generator
//! (`rand_chacha::ChaCha8Rng`) seeded with `seed_from_u64(seed)`. Trial `t`
//! of an experiment uses stream id `t` of that seed (ChaCha's native 64-bit
//! stream selector), so trials can be generated in any order or in parallel.
//!
//! * uniform draws take the top 53 bits of `next_u64()`: `(x >> 11)·2⁻⁵³`,
//!   giving values in `[0, 1)`;
//! * standard normal draws use the Marsaglia polar method on
//!   `2·uniform − 1` pairs, returning both outputs of each accepted pair in
//!   order (the second is cached).
//!
//! A trial draws, in order: the cloud (K×3 uniforms in `[−1, 1]`, row by
//! row), the rotation quaternion (4 normals), the 3D target noise (K×3
//! normals) and the image noise (K×2 normals).

use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{PoseError, Result};
use crate::linalg::{mat3_mul_vec, qr_decompose, Mat};
use crate::quat::{quat_to_rot, Quaternion, Rotation3};

/// Smallest point count accepted by the solvers.
pub const MIN_POINTS: usize = 4;

/// Seedable generator with independent per-trial substreams.
#[derive(Clone, Debug)]
pub struct SimRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Stream `stream` of `seed`; streams never overlap.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SimRng { inner, spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via the Marsaglia polar method.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }
}

/// Reference point set, one point per row (K×N).
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud(Mat);

/// Target point set `y_k = R·x_k (+ noise)`, one point per row (K×N).
#[derive(Clone, Debug, PartialEq)]
pub struct TargetCloud(Mat);

/// Orthographic image `u_k = P·x_k (+ noise)`, one point per row (K×(N−1)).
#[derive(Clone, Debug, PartialEq)]
pub struct OrthoImage(Mat);

macro_rules! point_set {
    ($ty:ident) => {
        impl $ty {
            pub fn new(points: Mat) -> Self {
                $ty(points)
            }

            pub fn from_rows<const C: usize>(rows: &[[f64; C]]) -> Self {
                $ty(Mat::from_rows(rows))
            }

            pub fn as_mat(&self) -> &Mat {
                &self.0
            }

            pub fn into_mat(self) -> Mat {
                self.0
            }

            /// Number of points.
            pub fn len(&self) -> usize {
                self.0.rows()
            }

            pub fn is_empty(&self) -> bool {
                self.0.rows() == 0
            }

            /// Coordinates per point.
            pub fn dim(&self) -> usize {
                self.0.cols()
            }

            pub fn point(&self, k: usize) -> &[f64] {
                self.0.row(k)
            }

            pub fn scaled(&self, s: f64) -> Self {
                $ty(self.0.scale(s))
            }
        }
    };
}

point_set!(PointCloud);
point_set!(TargetCloud);
point_set!(OrthoImage);

impl PointCloud {
    /// Subtracts the column means.
    pub fn center(&mut self) {
        let (k, n) = self.0.shape();
        for j in 0..n {
            let mean = (0..k).map(|i| self.0[(i, j)]).sum::<f64>() / k as f64;
            for i in 0..k {
                self.0[(i, j)] -= mean;
            }
        }
    }

    pub fn centered(mut self) -> Self {
        self.center();
        self
    }

    /// Largest absolute column mean.
    pub fn max_column_mean(&self) -> f64 {
        let (k, n) = self.0.shape();
        (0..n)
            .map(|j| ((0..k).map(|i| self.0[(i, j)]).sum::<f64>() / k as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Point `k` as a 3-vector; panics on non-3D clouds.
    pub fn point3(&self, k: usize) -> [f64; 3] {
        let p = self.0.row(k);
        [p[0], p[1], p[2]]
    }
}

impl TargetCloud {
    pub fn point3(&self, k: usize) -> [f64; 3] {
        let p = self.0.row(k);
        [p[0], p[1], p[2]]
    }
}

/// Checks that `other` pairs with a `dim`-dimensional `cloud` of at least
/// `min_k` points and has `other_dim` coordinates per point.
pub(crate) fn check_pair(cloud: &Mat, other: &Mat, dim: usize, other_dim: usize, min_k: usize) -> Result<()> {
    if cloud.cols() != dim {
        return Err(PoseError::SizeMismatch {
            expected: format!("{dim}D reference cloud"),
            found: format!("{}D", cloud.cols()),
        });
    }
    if other.cols() != other_dim {
        return Err(PoseError::SizeMismatch {
            expected: format!("{other_dim} coordinates per target point"),
            found: format!("{}", other.cols()),
        });
    }
    if cloud.rows() != other.rows() {
        return Err(PoseError::SizeMismatch {
            expected: format!("{} points", cloud.rows()),
            found: format!("{} points", other.rows()),
        });
    }
    if cloud.rows() < min_k {
        return Err(PoseError::TooFewPoints { got: cloud.rows(), need: min_k });
    }
    if cloud.as_slice().iter().chain(other.as_slice()).any(|v| !v.is_finite()) {
        return Err(PoseError::NonFinite);
    }
    Ok(())
}

/// Noise level and seed for target or image perturbation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(PoseError::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(NoiseSpec { sigma, seed })
    }

    pub fn exact() -> Self {
        NoiseSpec { sigma: 0.0, seed: 0 }
    }
}

/// `k` points uniform in `[−1, 1]³`, then centered.
pub fn random_cloud(k: usize, seed: u64) -> Result<PointCloud> {
    random_cloud_with(k, 3, &mut SimRng::new(seed))
}

/// `k` points uniform in `[−1, 1]ⁿ` drawn from `rng`, then centered.
pub fn random_cloud_with(k: usize, dim: usize, rng: &mut SimRng) -> Result<PointCloud> {
    if k < MIN_POINTS {
        return Err(PoseError::TooFewPoints { got: k, need: MIN_POINTS });
    }
    let data: Vec<f64> = (0..k * dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    Ok(PointCloud(Mat::new(k, dim, data)?).centered())
}

/// Uniformly distributed rotation as a sign-canonical unit quaternion.
pub fn random_quaternion(seed: u64) -> Quaternion {
    random_quaternion_with(&mut SimRng::new(seed))
}

pub fn random_quaternion_with(rng: &mut SimRng) -> Quaternion {
    loop {
        let q = Quaternion::new(rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian());
        if let Ok(q) = q.normalized() {
            return q.canonical();
        }
    }
}

/// Haar-random SO(n) matrix: QR of a Gaussian matrix with the sign
/// convention fixed, then one column flipped if needed for det = +1.
pub fn random_rotation_nd(n: usize, rng: &mut SimRng) -> Mat {
    loop {
        let g = Mat::from_fn(n, n, |_, _| rng.gaussian());
        let Ok((s, _)) = qr_decompose(&g) else { continue };
        let mut q = s.transpose();
        if q.det() < 0.0 {
            for i in 0..n {
                q[(i, 0)] = -q[(i, 0)];
            }
        }
        return q;
    }
}

/// Rotates every point, then adds N(0, σ²) per coordinate using the
/// noise seed.
pub fn make_target(cloud: &PointCloud, r: &Rotation3, noise: &NoiseSpec) -> TargetCloud {
    make_target_with(cloud, r, noise.sigma, &mut SimRng::new(noise.seed))
}

pub fn make_target_with(cloud: &PointCloud, r: &Rotation3, sigma: f64, rng: &mut SimRng) -> TargetCloud {
    let k = cloud.len();
    let mut out = Mat::zeros(k, 3);
    for i in 0..k {
        let y = mat3_mul_vec(r.matrix(), &cloud.point3(i));
        for (j, v) in y.iter().enumerate() {
            out[(i, j)] = if sigma > 0.0 { v + sigma * rng.gaussian() } else { *v };
        }
    }
    TargetCloud(out)
}

/// Rotated points truncated to their first two coordinates, plus noise.
pub fn make_ortho(cloud: &PointCloud, r: &Rotation3, noise: &NoiseSpec) -> OrthoImage {
    make_ortho_with(cloud, r, noise.sigma, &mut SimRng::new(noise.seed))
}

pub fn make_ortho_with(cloud: &PointCloud, r: &Rotation3, sigma: f64, rng: &mut SimRng) -> OrthoImage {
    let k = cloud.len();
    let mut out = Mat::zeros(k, 2);
    for i in 0..k {
        let y = mat3_mul_vec(r.matrix(), &cloud.point3(i));
        for j in 0..2 {
            out[(i, j)] = if sigma > 0.0 { y[j] + sigma * rng.gaussian() } else { y[j] };
        }
    }
    OrthoImage(out)
}

/// Places an image in the plane `z = const` as a 3D target.
pub fn lift_ortho_to_plane(img: &OrthoImage, z: f64) -> TargetCloud {
    let k = img.len();
    TargetCloud(Mat::from_fn(k, 3, |i, j| if j < 2 { img.0[(i, j)] } else { z }))
}

/// Height used when lifting an image for the 3D solvers.
pub const DEFAULT_LIFT_Z: f64 = 1.0;

/// Everything one benchmark trial needs, generated from `(seed, trial_id)`.
#[derive(Clone, Debug)]
pub struct TrialData {
    pub trial_id: u64,
    pub seed: u64,
    pub sigma: f64,
    pub cloud: PointCloud,
    pub quaternion: Quaternion,
    pub rotation: Rotation3,
    pub target: TargetCloud,
    pub image: OrthoImage,
}

pub fn generate_trial(seed: u64, trial_id: u64, k: usize, sigma: f64) -> Result<TrialData> {
    NoiseSpec::new(sigma, seed)?;
    let mut rng = SimRng::substream(seed, trial_id);
    let cloud = random_cloud_with(k, 3, &mut rng)?;
    let quaternion = random_quaternion_with(&mut rng);
    let rotation = quat_to_rot(quaternion)?;
    let target = make_target_with(&cloud, &rotation, sigma, &mut rng);
    let image = make_ortho_with(&cloud, &rotation, sigma, &mut rng);
    Ok(TrialData {
        trial_id,
        seed,
        sigma,
        cloud,
        quaternion,
        rotation,
        target,
        image,
    })
}

/// N-dimensional exact trial: centered cloud, Haar SO(N) rotation and the
/// rotated target (`y_k = R·x_k`).
pub fn generate_trial_nd(seed: u64, trial_id: u64, n: usize, k: usize) -> Result<(PointCloud, Mat, TargetCloud)> {
    generate_noisy_trial_nd(seed, trial_id, n, k, 0.0)
}

/// As [`generate_trial_nd`], then adds N(0, σ²) to every target
/// coordinate. The noise draws follow the rotation in the same substream,
/// so σ = 0 reproduces the exact trial.
pub fn generate_noisy_trial_nd(
    seed: u64,
    trial_id: u64,
    n: usize,
    k: usize,
    sigma: f64,
) -> Result<(PointCloud, Mat, TargetCloud)> {
    NoiseSpec::new(sigma, seed)?;
    let mut rng = SimRng::substream(seed, trial_id);
    let cloud = random_cloud_with(k, n, &mut rng)?;
    let r = random_rotation_nd(n, &mut rng);
    let mut target = cloud.as_mat().matmul(&r.transpose());
    if sigma > 0.0 {
        for i in 0..k {
            for v in target.row_mut(i) {
                *v += sigma * rng.gaussian();
            }
        }
    }
    Ok((cloud, r, TargetCloud(target)))
}

// ---------------------------------------------------------------------------
// CSV

/// Column names used for a point set of the given width.
pub fn default_header(dim: usize) -> Vec<String> {
    match dim {
        2 => vec!["u".into(), "v".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        n => (1..=n).map(|i| format!("x{i}")).collect(),
    }
}

/// Formats with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes one point per row with a header row.
pub fn write_points_csv<W: Write>(w: W, points: &Mat, header: &[String]) -> Result<()> {
    if header.len() != points.cols() {
        return Err(PoseError::SizeMismatch {
            expected: format!("{} header columns", points.cols()),
            found: format!("{}", header.len()),
        });
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header)?;
    for i in 0..points.rows() {
        wtr.write_record(points.row(i).iter().map(|v| fmt_f64(*v)))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a headered CSV of points; every row must have the header's width.
pub fn read_points_csv<R: Read>(r: R) -> Result<Mat> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let width = rdr.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != width {
            return Err(PoseError::Parse(format!("row {} has {} fields, expected {width}", rows + 1, rec.len())));
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| PoseError::Parse(format!("bad number {field:?} in row {}", rows + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(PoseError::Parse("no data rows".into()));
    }
    Mat::new(rows, width, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noisy_nd_trial_extends_the_exact_one() {
        let (c0, r0, t0) = generate_trial_nd(5, 2, 4, 10).unwrap();
        let (c1, r1, t1) = generate_noisy_trial_nd(5, 2, 4, 10, 0.0).unwrap();
        assert_eq!((c0, r0.clone(), t0.clone()), (c1.clone(), r1, t1));
        let (_, _, noisy) = generate_noisy_trial_nd(5, 2, 4, 10, 0.1).unwrap();
        let d = noisy.as_mat().max_abs_diff(t0.as_mat());
        assert!(d > 0.0 && d < 1.0);
        assert!(generate_noisy_trial_nd(5, 2, 4, 10, -1.0).is_err());
    }

    #[test]
    fn cloud_is_deterministic_and_centered() {
        let a = random_cloud(8, 42).unwrap();
        let b = random_cloud(8, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.max_column_mean() < 1e-12);
        assert_ne!(a, random_cloud(8, 43).unwrap());
    }

    #[test]
    fn cloud_needs_four_points() {
        assert_eq!(random_cloud(3, 1), Err(PoseError::TooFewPoints { got: 3, need: 4 }));
    }

    #[test]
    fn quaternion_is_unit_and_reproducible() {
        for seed in 0..100 {
            let q = random_quaternion(seed);
            assert!((q.norm() - 1.0).abs() < 1e-12);
            assert!(q.q0 >= 0.0);
            assert_eq!(q, random_quaternion(seed));
        }
    }

    #[test]
    fn exact_target_and_image() {
        let cloud = random_cloud(6, 3).unwrap();
        let r = Rotation3::identity();
        let t = make_target(&cloud, &r, &NoiseSpec::exact());
        assert_eq!(t.as_mat(), cloud.as_mat());
        let img = make_ortho(&cloud, &r, &NoiseSpec::exact());
        for k in 0..6 {
            assert_eq!(img.point(k), &cloud.point(k)[..2]);
        }
    }

    #[test]
    fn noisy_target_is_reproducible() {
        let cloud = random_cloud(8, 3).unwrap();
        let r = quat_to_rot(random_quaternion(9)).unwrap();
        let noise = NoiseSpec::new(0.1, 77).unwrap();
        assert_eq!(make_target(&cloud, &r, &noise), make_target(&cloud, &r, &noise));
        assert!(NoiseSpec::new(-0.1, 1).is_err());
    }

    #[test]
    fn lift_sets_constant_depth() {
        let img = OrthoImage::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let t0 = lift_ortho_to_plane(&img, 0.0);
        let t1 = lift_ortho_to_plane(&img, 1.0);
        for k in 0..2 {
            assert_eq!(t0.point(k)[2], 0.0);
            assert_eq!(t1.point(k)[2], 1.0);
            assert_eq!(&t1.point(k)[..2], img.point(k));
        }
    }

    #[test]
    fn substreams_are_independent_of_order() {
        let a = generate_trial(5, 3, 8, 0.1).unwrap();
        let _ = generate_trial(5, 2, 8, 0.1).unwrap();
        let b = generate_trial(5, 3, 8, 0.1).unwrap();
        assert_eq!(a.target, b.target);
        assert_ne!(a.cloud, generate_trial(5, 4, 8, 0.1).unwrap().cloud);
    }

    #[test]
    fn random_rotation_nd_is_special_orthogonal() {
        let mut rng = SimRng::new(11);
        for n in 2..=6 {
            let r = random_rotation_nd(n, &mut rng);
            assert!(r.tr_matmul(&r).max_abs_diff(&Mat::identity(n)) < 1e-12);
            assert!((r.det() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let cloud = random_cloud(5, 8).unwrap();
        let mut buf = Vec::new();
        write_points_csv(&mut buf, cloud.as_mat(), &default_header(3)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,y,z\n"));
        let back = read_points_csv(buf.as_slice()).unwrap();
        assert_eq!(&back, cloud.as_mat());
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(matches!(read_points_csv("x,y\n1,abc\n".as_bytes()), Err(PoseError::Parse(_))));
        assert!(matches!(read_points_csv("x,y\n".as_bytes()), Err(PoseError::Parse(_))));
    }
}
