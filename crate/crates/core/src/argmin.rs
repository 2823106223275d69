//! Direct numerical minimization of the EnP and OnP losses over unit
//! quaternions: the reference optimum every closed form is compared with.
//!
//! The minimizer is Levenberg-Marquardt on the residuals `R(q)·x_k − y_k`
//! (top two rows only for image data), switching from the Gauss-Newton
//! matrix to the exact Hessian wherever the latter is positive definite.
//! Steps live in the tangent space:
//! a 3-vector `ω` updates the quaternion by `q ← normalize(exp(ω)·q)`, so
//! the unit constraint holds at every iterate. Each solve restarts from the
//! eight quaternions `±e_i` and keeps the lowest loss.

use crate::error::{PoseError, Result};
use crate::linalg::{inverse3, norm, Mat3, Vec3};
use crate::quat::{quat_to_matrix, quat_to_rot, Quaternion};
use crate::rmsd::{Method, PoseEstimate, MIN_POINTS_ENP, MIN_POINTS_ONP};
use crate::simulate::{check_pair, OrthoImage, PointCloud, TargetCloud};

/// The `±e_i` starting quaternions.
pub const MULTISTART: [Quaternion; 8] = [
    Quaternion::new(1.0, 0.0, 0.0, 0.0),
    Quaternion::new(-1.0, 0.0, 0.0, 0.0),
    Quaternion::new(0.0, 1.0, 0.0, 0.0),
    Quaternion::new(0.0, -1.0, 0.0, 0.0),
    Quaternion::new(0.0, 0.0, 1.0, 0.0),
    Quaternion::new(0.0, 0.0, -1.0, 0.0),
    Quaternion::new(0.0, 0.0, 0.0, 1.0),
    Quaternion::new(0.0, 0.0, 0.0, -1.0),
];

/// Stopping rules for one local solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArgminOptions {
    pub max_iterations: usize,
    /// Bound on the norm of the loss gradient with respect to `ω`.
    pub gradient_tol: f64,
    /// Bound on the norm of the tangent step.
    pub step_tol: f64,
    /// Relative loss decrease below which an accepted step ends the solve.
    pub function_tol: f64,
}

impl Default for ArgminOptions {
    fn default() -> Self {
        ArgminOptions {
            max_iterations: 200,
            gradient_tol: 1e-12,
            step_tol: 1e-14,
            function_tol: 1e-15,
        }
    }
}

/// Outcome of one local solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalSolve {
    pub quaternion: Quaternion,
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Residuals<'a> {
    x: &'a [f64],
    y: &'a [f64],
    ydim: usize,
    k: usize,
}

struct Linearization {
    loss: f64,
    /// Gauss-Newton matrix `ΣJᵀJ`.
    h: Mat3,
    /// Exact Hessian (halved) of the sum of squares at `ω = 0`.
    h_full: Mat3,
    b: Vec3,
}

impl Residuals<'_> {
    /// `loss(new) − loss(old)` evaluated as `Σ Δr·(r_new + r_old)` so that
    /// differences far below the loss's own rounding stay resolvable.
    fn loss_change(&self, old: &Mat3, new: &Mat3) -> f64 {
        let delta: Mat3 = std::array::from_fn(|a| std::array::from_fn(|b| new[a][b] - old[a][b]));
        let mut sum = 0.0;
        for i in 0..self.k {
            let x = &self.x[3 * i..3 * i + 3];
            let y = &self.y[self.ydim * i..self.ydim * (i + 1)];
            for a in 0..self.ydim {
                let dot = |m: &Mat3| m[a][0] * x[0] + m[a][1] * x[1] + m[a][2] * x[2];
                sum += dot(&delta) * (dot(new) + dot(old) - 2.0 * y[a]);
            }
        }
        sum / self.k as f64
    }

    // Derivatives of the sum of squares (not the mean). With
    // R(ω) = exp([ω]×)·R, p(ω) = p + ω×p + ½ω×(ω×p) + O(ω³), so
    // ∂²p_a/∂ω_c∂ω_d = ½(δ_ac·p_d + δ_ad·p_c) − p_a·δ_cd.
    fn linearize(&self, r: &Mat3) -> Linearization {
        let mut h = [[0.0; 3]; 3];
        let mut second = [[0.0; 3]; 3];
        let mut b = [0.0; 3];
        let mut sum = 0.0;
        for i in 0..self.k {
            let x = &self.x[3 * i..3 * i + 3];
            let y = &self.y[self.ydim * i..self.ydim * (i + 1)];
            let p: Vec3 = std::array::from_fn(|a| r[a][0] * x[0] + r[a][1] * x[1] + r[a][2] * x[2]);
            // d(R·x)/dω = −[p]×
            let jac = [[0.0, p[2], -p[1]], [-p[2], 0.0, p[0]], [p[1], -p[0], 0.0]];
            for a in 0..self.ydim {
                let res = p[a] - y[a];
                sum += res * res;
                for c in 0..3 {
                    b[c] += jac[a][c] * res;
                    for d in 0..3 {
                        h[c][d] += jac[a][c] * jac[a][d];
                    }
                    second[a][c] += 0.5 * res * p[c];
                    second[c][a] += 0.5 * res * p[c];
                    second[c][c] -= res * p[a];
                }
            }
        }
        let h_full = std::array::from_fn(|c| std::array::from_fn(|d| h[c][d] + second[c][d]));
        Linearization { loss: sum / self.k as f64, h, h_full, b }
    }
}

fn positive_definite(m: &Mat3) -> bool {
    let d1 = m[0][0];
    let d2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    d1 > 0.0 && d2 > 0.0 && crate::linalg::det3(m) > 0.0
}

fn exp_update(q: Quaternion, w: &Vec3) -> Quaternion {
    let theta = norm(w);
    let half = 0.5 * theta;
    let s = if theta > 1e-300 { half.sin() / theta } else { 0.5 };
    let dq = Quaternion::new(half.cos(), s * w[0], s * w[1], s * w[2]);
    let out = dq.mul(q);
    let n = out.norm();
    Quaternion::new(out.q0 / n, out.q1 / n, out.q2 / n, out.q3 / n)
}

fn local_solve(res: &Residuals<'_>, start: Quaternion, opts: &ArgminOptions) -> Result<LocalSolve> {
    let mut q = start.normalized()?;
    let mut lin = res.linearize(&quat_to_matrix(q));
    let mut lambda = 1e-3 * (0..3).map(|i| lin.h[i][i]).fold(0.0, f64::max);
    // Scale for the stagnation test: mean ‖x‖·‖y‖.
    let scale = (0..res.k)
        .map(|i| {
            let x = &res.x[3 * i..3 * i + 3];
            let y = &res.y[res.ydim * i..res.ydim * (i + 1)];
            x.iter().map(|v| v * v).sum::<f64>().sqrt() * y.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .sum::<f64>()
        / res.k as f64;
    let kf = res.k as f64;
    // Gradient level that rounding alone can produce.
    let stall_grad = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let noise_floor = 16.0 * f64::EPSILON * scale;

    for iter in 0..opts.max_iterations {
        if lin.loss == 0.0 {
            return Ok(LocalSolve { quaternion: q, loss: 0.0, iterations: iter, converged: true });
        }
        let grad = norm(&lin.b) * 2.0 / kf;
        // Newton where the exact Hessian is positive definite (quadratic
        // convergence near the minimum even with large residuals),
        // Gauss-Newton elsewhere.
        let model = if positive_definite(&lin.h_full) { lin.h_full } else { lin.h };
        let newton_step = inverse3(&model)
            .map(|inv| std::array::from_fn::<f64, 3, _>(|i| -(0..3).map(|j| inv[i][j] * lin.b[j]).sum::<f64>()))
            .ok();
        if grad < opts.gradient_tol && newton_step.is_some_and(|s| norm(&s) < opts.step_tol) {
            return Ok(LocalSolve { quaternion: q, loss: lin.loss, iterations: iter, converged: true });
        }

        let mut damped = model;
        for (i, row) in damped.iter_mut().enumerate() {
            row[i] += lambda * model[i][i].max(1e-12 * scale * kf);
        }
        let step: Vec3 = match inverse3(&damped) {
            Ok(inv) => std::array::from_fn(|i| -(0..3).map(|j| inv[i][j] * lin.b[j]).sum::<f64>()),
            Err(_) => {
                lambda = lambda.max(1e-12) * 10.0;
                continue;
            }
        };
        let candidate = exp_update(q, &step);
        let r_new = quat_to_matrix(candidate);
        let change = res.loss_change(&quat_to_matrix(q), &r_new);
        let next = res.linearize(&r_new);
        // Near the optimum the loss change drowns in the rounding of R(q);
        // the gradient is still accurate there, so let it decide.
        let accept = change < 0.0 || (change <= noise_floor && norm(&next.b) < norm(&lin.b));
        if accept {
            let old = lin.loss;
            q = candidate;
            lin = next;
            lambda = (lambda / 3.0).max(1e-15);
            let small_grad = norm(&lin.b) * 2.0 / kf <= stall_grad;
            if -change <= opts.function_tol * old && small_grad {
                return Ok(LocalSolve { quaternion: q, loss: lin.loss, iterations: iter + 1, converged: true });
            }
        } else {
            lambda = lambda.max(1e-12) * 4.0;
            if lambda > 1e16 || norm(&step) < opts.step_tol {
                // No descent is representable any more.
                let converged = grad <= stall_grad;
                return Ok(LocalSolve { quaternion: q, loss: lin.loss, iterations: iter + 1, converged });
            }
        }
    }
    Ok(LocalSolve {
        quaternion: q,
        loss: lin.loss,
        iterations: opts.max_iterations,
        converged: false,
    })
}

fn multistart(res: &Residuals<'_>, starts: &[Quaternion], opts: &ArgminOptions) -> Result<LocalSolve> {
    if starts.is_empty() {
        return Err(PoseError::InvalidArgument("no starting quaternions".into()));
    }
    let mut best: Option<LocalSolve> = None;
    for s in starts {
        let run = local_solve(res, *s, opts)?;
        if best.is_none_or(|b| run.loss < b.loss) {
            best = Some(run);
        }
    }
    let best = best.expect("non-empty starts");
    if !best.converged {
        return Err(PoseError::NoConvergence {
            iterations: best.iterations,
            loss: best.loss,
            rotation: quat_to_matrix(best.quaternion),
        });
    }
    Ok(LocalSolve { quaternion: best.quaternion.canonical(), ..best })
}

/// Minimizes the EnP loss from explicit starting quaternions.
pub fn argmin_enp_from(
    cloud: &PointCloud,
    target: &TargetCloud,
    starts: &[Quaternion],
    opts: &ArgminOptions,
) -> Result<LocalSolve> {
    check_pair(cloud.as_mat(), target.as_mat(), 3, 3, MIN_POINTS_ENP)?;
    let res = Residuals { x: cloud.as_mat().as_slice(), y: target.as_mat().as_slice(), ydim: 3, k: cloud.len() };
    multistart(&res, starts, opts)
}

/// Minimizes the OnP loss from explicit starting quaternions.
pub fn argmin_onp_from(
    cloud: &PointCloud,
    image: &OrthoImage,
    starts: &[Quaternion],
    opts: &ArgminOptions,
) -> Result<LocalSolve> {
    check_pair(cloud.as_mat(), image.as_mat(), 3, 2, MIN_POINTS_ONP)?;
    let res = Residuals { x: cloud.as_mat().as_slice(), y: image.as_mat().as_slice(), ydim: 2, k: cloud.len() };
    multistart(&res, starts, opts)
}

pub fn solve_argmin_enp(cloud: &PointCloud, target: &TargetCloud) -> Result<PoseEstimate> {
    solve_argmin_enp_from(cloud, target, &MULTISTART)
}

pub fn solve_argmin_enp_from(cloud: &PointCloud, target: &TargetCloud, starts: &[Quaternion]) -> Result<PoseEstimate> {
    let run = argmin_enp_from(cloud, target, starts, &ArgminOptions::default())?;
    PoseEstimate::enp(quat_to_rot(run.quaternion)?, Method::Argmin, cloud, target)
}

pub fn solve_argmin_onp(cloud: &PointCloud, image: &OrthoImage) -> Result<PoseEstimate> {
    solve_argmin_onp_from(cloud, image, &MULTISTART)
}

pub fn solve_argmin_onp_from(cloud: &PointCloud, image: &OrthoImage, starts: &[Quaternion]) -> Result<PoseEstimate> {
    let run = argmin_onp_from(cloud, image, starts, &ArgminOptions::default())?;
    PoseEstimate::onp(quat_to_rot(run.quaternion)?, Method::Argmin, cloud, image)
}
