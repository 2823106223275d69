//! Single pose solve on user-supplied correspondences.

use std::io::{Read, Write};

use dram_pose::argmin::{solve_argmin_enp, solve_argmin_onp};
use dram_pose::correct::correct;
use dram_pose::dram::{solve_dram_enp, solve_dram_nd, solve_dram_nd_ortho, solve_dram_onp, solve_pinv_map, solve_qr_map};
use dram_pose::loss::{enp_loss_nd, LossValue};
use dram_pose::rmsd::{solve_hhn, solve_onp_adapted, solve_qmax, solve_qmin, solve_svd, HhnVariant, Method, PoseEstimate, Problem};
use dram_pose::simulate::{fmt_f64, read_points_csv};
use dram_pose::{Mat, OrthoImage, PointCloud, PoseError, TargetCloud};
use serde::Serialize;

use crate::config::Correction;
use crate::error::{BenchError, Result};
use crate::trial::row_defect;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveOutput {
    pub problem: &'static str,
    pub method: &'static str,
    pub correction: Correction,
    pub dim: usize,
    pub points: usize,
    /// Square rotation (or bare candidate) as nested rows. Corrected image
    /// solutions carry the completed last row.
    pub matrix: Vec<Vec<f64>>,
    /// Loss of the rows that act on the data.
    pub loss: f64,
    /// `‖MMᵀ − I‖_F` of `matrix`.
    pub defect: f64,
}

/// Subtracts column means so that a translation between the two sets does
/// not enter the rotation estimate.
fn centered(m: &Mat) -> Mat {
    let (k, n) = m.shape();
    let means: Vec<f64> = (0..n).map(|j| (0..k).map(|i| m[(i, j)]).sum::<f64>() / k as f64).collect();
    Mat::from_fn(k, n, |i, j| m[(i, j)] - means[j])
}

fn image_loss(m: &Mat, cloud: &PointCloud, image: &OrthoImage) -> std::result::Result<f64, PoseError> {
    let rows = image.dim();
    if cloud.len() != image.len() || m.rows() < rows || m.cols() != cloud.dim() {
        return Err(PoseError::SizeMismatch {
            expected: format!("{} points and {rows} matrix rows", cloud.len()),
            found: format!("{} points and {} rows", image.len(), m.rows()),
        });
    }
    let mapped = cloud.as_mat().matmul(&m.top_rows(rows).transpose());
    Ok(LossValue::new(mapped.sub(image.as_mat()).frobenius().powi(2) / cloud.len() as f64)?.value())
}

fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn from_estimate(est: PoseEstimate) -> (Mat, f64) {
    (Mat::from_mat3(est.rotation.matrix()), est.loss.value())
}

/// Solves one pose problem. `cloud` is K×N; `observed` is K×N for EnP and
/// K×(N−1) for OnP. Both sets are centered first. N ≠ 3 supports DRaM
/// only.
pub fn solve_points(problem: Problem, cloud: &Mat, observed: &Mat, method: Method, correction: Correction) -> Result<SolveOutput> {
    let n = cloud.cols();
    let want = match problem {
        Problem::Enp => n,
        Problem::Onp => n.saturating_sub(1),
    };
    if observed.cols() != want || observed.rows() != cloud.rows() {
        return Err(BenchError::Config(format!(
            "{} needs a {}x{want} second file for a {}x{n} cloud, got {}x{}",
            problem.tag(),
            cloud.rows(),
            cloud.rows(),
            observed.rows(),
            observed.cols()
        )));
    }
    if n != 3 && method != Method::Dram {
        return Err(BenchError::Config(format!("{n}D input supports the dram method only, got {}", method.tag())));
    }
    let cloud = PointCloud::new(centered(cloud));
    let observed = centered(observed);
    let ctx = format!("{} {}", problem.tag(), method.tag());
    let pose = |e| BenchError::from_pose(ctx.clone(), e);
    let cm = correction.method();
    let (matrix, loss, corrected) = match problem {
        Problem::Enp => {
            let target = TargetCloud::new(observed);
            let rmsd = match method {
                Method::Argmin => Some(solve_argmin_enp(&cloud, &target)),
                Method::Qmin => Some(solve_qmin(&cloud, &target)),
                Method::Qmax => Some(solve_qmax(&cloud, &target)),
                Method::Svd => Some(solve_svd(&cloud, &target)),
                Method::Hhn => Some(solve_hhn(&cloud, &target, HhnVariant::Minus)),
                _ => None,
            };
            if let Some(est) = rmsd {
                let (m, l) = from_estimate(est.map_err(pose)?);
                (m, l, false)
            } else {
                let cand = match method {
                    Method::Dram if n == 3 => solve_dram_enp(&cloud, &target),
                    Method::Dram => solve_dram_nd(&cloud, &target),
                    Method::Qr => solve_qr_map(&cloud, &target),
                    _ => solve_pinv_map(&cloud, &target),
                }
                .map_err(pose)?
                .matrix;
                let m = match cm {
                    Some(c) => correct(&cand, c).map_err(pose)?.corrected,
                    None => cand,
                };
                let l = enp_loss_nd(&m, &cloud, &target).map_err(pose)?.value();
                (m, l, cm.is_some())
            }
        }
        Problem::Onp => {
            let image = OrthoImage::new(observed);
            let rmsd = match method {
                Method::Argmin => Some(solve_argmin_onp(&cloud, &image)),
                m if m.is_rmsd_closed_form() => Some(solve_onp_adapted(&cloud, &image, m)),
                _ => None,
            };
            if let Some(est) = rmsd {
                let (m, l) = from_estimate(est.map_err(pose)?);
                (m, l, false)
            } else {
                let cand = match method {
                    Method::Dram if n == 3 => solve_dram_onp(&cloud, &image),
                    Method::Dram => solve_dram_nd_ortho(&cloud, &image),
                    Method::Qr => solve_qr_map(&cloud, &image),
                    _ => solve_pinv_map(&cloud, &image),
                }
                .map_err(pose)?
                .matrix;
                let m = match cm {
                    Some(c) => correct(&cand.top_rows(n - 1), c).map_err(pose)?.corrected,
                    None => cand,
                };
                let l = image_loss(&m, &cloud, &image).map_err(pose)?;
                (m, l, cm.is_some())
            }
        }
    };
    Ok(SolveOutput {
        problem: problem.tag(),
        method: method.tag(),
        correction: if corrected { correction } else { Correction::None },
        dim: n,
        points: cloud.len(),
        defect: row_defect(&matrix),
        matrix: to_rows(&matrix),
        loss,
    })
}

/// Reads both CSV files and solves.
pub fn solve_files<R1: Read, R2: Read>(problem: Problem, cloud: R1, observed: R2, method: Method, correction: Correction) -> Result<SolveOutput> {
    let cloud = read_points_csv(cloud).map_err(|e| BenchError::from_pose("reading cloud", e))?;
    let observed = read_points_csv(observed).map_err(|e| BenchError::from_pose("reading target", e))?;
    solve_points(problem, &cloud, &observed, method, correction)
}

/// One-row CSV: metadata, loss, defect, then the matrix row-major as
/// `m_<row>_<col>` (1-based).
pub fn write_solve_csv<W: Write>(w: W, out: &SolveOutput) -> Result<()> {
    let mut header = vec!["problem", "method", "correction", "dim", "points", "loss", "defect"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    let mut row = vec![
        out.problem.to_string(),
        out.method.to_string(),
        out.correction.to_string(),
        out.dim.to_string(),
        out.points.to_string(),
        fmt_f64(out.loss),
        fmt_f64(out.defect),
    ];
    for (i, r) in out.matrix.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            header.push(format!("m_{}_{}", i + 1, j + 1));
            row.push(fmt_f64(*v));
        }
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(&header)?;
    wtr.write_record(&row)?;
    wtr.flush()?;
    Ok(())
}
