//! Property tests for the module invariants.

#![allow(clippy::needless_range_loop)]

use dram_pose::argmin::solve_argmin_enp;
use dram_pose::correct::{correct, correct_svd, CorrectionMethod};
use dram_pose::dram::{extend_rows, solve_dram_enp, solve_dram_nd, solve_dram_onp, solve_pinv_map, solve_qr_map};
use dram_pose::linalg::{det3, mat3_mul, mat3_transpose, orthonormality_defect, pseudoinverse, qr_decompose, svd, sym_eigen4, Mat, Mat3, Mat4};
use dram_pose::loss::{enp_loss, onp_loss};
use dram_pose::quat::{
    adjugate_from_quat, eigen_quaternion, extend_partial_rotation, quat_angle_diff, quat_from_adjugate, quat_to_matrix,
    rot_to_quat, Extreme, PartialRotation23, Quaternion, Rotation3,
};
use dram_pose::rmsd::{solve_hhn, solve_qmax, solve_qmin, solve_svd, HhnVariant};
use dram_pose::simulate::{generate_trial, generate_trial_nd, random_quaternion_with, SimRng};
use dram_pose::{OrthoImage, PointCloud, TargetCloud};
use proptest::prelude::*;

fn frob3(a: &Mat3, b: &Mat3) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn unit_quat() -> impl Strategy<Value = Quaternion> {
    any::<u64>().prop_map(|s| random_quaternion_with(&mut SimRng::new(s)))
}

fn random_mat(rng: &mut SimRng, rows: usize, cols: usize, half: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.uniform_range(-half, half))
}

fn with_cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, failure_persistence: None, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(with_cases(1000))]

    #[test]
    fn quat_to_rot_is_a_homomorphism(p in unit_quat(), q in unit_quat()) {
        let lhs = quat_to_matrix(p.mul(q));
        let rhs = mat3_mul(&quat_to_matrix(p), &quat_to_matrix(q));
        prop_assert!(frob3(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn rot_to_quat_round_trips(q in unit_quat()) {
        let back = rot_to_quat(&quat_to_matrix(q)).unwrap();
        prop_assert!(quat_angle_diff(back, q) < 1e-7, "{} deg", quat_angle_diff(back, q));
    }

    #[test]
    fn svd_reconstructs(seed in any::<u64>(), shape in 0usize..4) {
        let mut rng = SimRng::new(seed);
        let (r, c) = [(3, 3), (2, 3), (8, 3), (5, 5)][shape];
        let m = random_mat(&mut rng, r, c, 10.0);
        let d = svd(&m).unwrap();
        let sigma = Mat::from_fn(r, c, |i, j| if i == j { d.s[i] } else { 0.0 });
        let back = d.u.matmul(&sigma).matmul(&d.v.transpose());
        prop_assert!(back.sub(&m).frobenius() < 1e-10 * m.frobenius());
        prop_assert!(d.u.tr_matmul(&d.u).max_abs_diff(&Mat::identity(r)) < 1e-12);
        prop_assert!(d.v.tr_matmul(&d.v).max_abs_diff(&Mat::identity(c)) < 1e-12);
        prop_assert!(d.s.windows(2).all(|w| w[0] >= w[1]) && d.s.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn qr_and_pseudoinverse_contracts(seed in any::<u64>(), k in 4usize..=64) {
        let mut rng = SimRng::new(seed);
        let x = random_mat(&mut rng, k, 3, 1.0);
        let (s, t) = qr_decompose(&x).unwrap();
        prop_assert!(s.transpose().matmul(&t).max_abs_diff(&x) < 1e-12);
        prop_assert!(s.matmul(&s.transpose()).max_abs_diff(&Mat::identity(3)) < 1e-12);
        for i in 0..3 {
            prop_assert!(t[(i, i)] >= 0.0);
            for j in 0..i {
                prop_assert!(t[(i, j)] == 0.0);
            }
        }
        let p = pseudoinverse(&x).unwrap();
        prop_assert!(p.matmul(&x).max_abs_diff(&Mat::identity(3)) < 1e-10);
        prop_assert!(x.matmul(&p).matmul(&x).max_abs_diff(&x) < 1e-12);
    }
}

proptest! {
    #![proptest_config(with_cases(256))]

    #[test]
    fn adjugate_eigenvector_matches_jacobi(seed in any::<u64>()) {
        let mut rng = SimRng::new(seed);
        let mut m: Mat4 = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in i..4 {
                let v = rng.uniform_range(-1.0, 1.0);
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        let eig = sym_eigen4(&m).unwrap();
        for (which, idx) in [(Extreme::Max, 0), (Extreme::Min, 3)] {
            let gap = if idx == 0 { eig.values[0] - eig.values[1] } else { eig.values[2] - eig.values[3] };
            prop_assume!(gap > 1e-6);
            let (q, e) = eigen_quaternion(&m, which).unwrap();
            prop_assert!((e - eig.values[idx]).abs() < 1e-10);
            let v = eig.vectors[idx];
            let dot: f64 = q.to_array().iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            prop_assert!((dot.abs() - 1.0).abs() < 1e-8, "|<q, v>| = {}", dot.abs());
        }
    }

    #[test]
    fn bar_itzhack_matches_svd_on_noisy_rotations(q in unit_quat(), seed in any::<u64>(), size in 0.0..0.3f64) {
        let mut rng = SimRng::new(seed);
        let e: Vec<f64> = (0..9).map(|_| rng.gaussian()).collect();
        let n = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = quat_to_matrix(q);
        let m: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| r[i][j] + size * e[3 * i + j] / n));
        let via_quat = rot_to_quat(&m).unwrap();
        let svd_path = correct_svd(&Mat::from_mat3(&m)).unwrap().corrected.to_mat3().unwrap();
        let via_svd = rot_to_quat(&svd_path).unwrap();
        prop_assert!(quat_angle_diff(via_quat, via_svd) < 1e-8);
    }

    #[test]
    fn partial_rotation_extends_to_original(q in unit_quat()) {
        let r = quat_to_matrix(q);
        let ext = extend_partial_rotation(&PartialRotation23([r[0], r[1]])).unwrap();
        prop_assert!(frob3(ext.matrix(), &r) < 1e-12);
        let rows = extend_rows(&Mat::from_rows(&[r[0], r[1]])).unwrap();
        prop_assert!(rows.to_mat3().map(|m| frob3(&m, &r)).unwrap() < 1e-12);
    }

    #[test]
    fn onp_loss_ignores_third_row(seed in any::<u64>(), id in 0u64..1000) {
        let t = generate_trial(seed, id, 8, 0.1).unwrap();
        let r = *t.rotation.matrix();
        let full = onp_loss(&r, &t.cloud, &t.image).unwrap().value();
        let top = onp_loss(&r[..2], &t.cloud, &t.image).unwrap().value();
        prop_assert_eq!(full.to_bits(), top.to_bits());
    }

    #[test]
    fn dram_class_is_scale_covariant(seed in any::<u64>(), lambda in 0.1..10.0f64) {
        let t = generate_trial(seed, 0, 8, 0.1).unwrap();
        let cloud = t.cloud.scaled(lambda);
        let target = t.target.scaled(lambda);
        let image = t.image.scaled(lambda);
        let pairs = [
            (solve_dram_enp(&t.cloud, &t.target).unwrap(), solve_dram_enp(&cloud, &target).unwrap()),
            (solve_qr_map(&t.cloud, &t.target).unwrap(), solve_qr_map(&cloud, &target).unwrap()),
            (solve_pinv_map(&t.cloud, &t.target).unwrap(), solve_pinv_map(&cloud, &target).unwrap()),
            (solve_dram_onp(&t.cloud, &t.image).unwrap(), solve_dram_onp(&cloud, &image).unwrap()),
            (solve_qr_map(&t.cloud, &t.image).unwrap(), solve_qr_map(&cloud, &image).unwrap()),
            (solve_pinv_map(&t.cloud, &t.image).unwrap(), solve_pinv_map(&cloud, &image).unwrap()),
        ];
        for (a, b) in &pairs {
            let scale = a.matrix.as_slice().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            prop_assert!(a.matrix.max_abs_diff(&b.matrix) < 1e-12 * scale, "{:?}", a.method);
        }
    }

    #[test]
    fn nd_determinant_identity(seed in any::<u64>(), n in 2usize..=8) {
        let (cloud, r, target) = generate_trial_nd(seed, 0, n, 2 * n + 2).unwrap();
        let c = solve_dram_nd(&cloud, &target).unwrap();
        let det = c.determinants.unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((det.numerators[(i, j)] - r[(i, j)] * det.d0).abs() < 1e-8 * det.d0.abs());
            }
        }
    }
}

proptest! {
    #![proptest_config(with_cases(64))]

    #[test]
    fn rotation_solvers_never_beat_argmin(seed in any::<u64>(), sigma in 0.0..0.3f64) {
        let t = generate_trial(seed, 0, 8, sigma).unwrap();
        let best = solve_argmin_enp(&t.cloud, &t.target).unwrap().loss.value();
        let mut outputs = vec![
            *solve_qmin(&t.cloud, &t.target).unwrap().rotation.matrix(),
            *solve_qmax(&t.cloud, &t.target).unwrap().rotation.matrix(),
            *solve_svd(&t.cloud, &t.target).unwrap().rotation.matrix(),
        ];
        if let Ok(h) = solve_hhn(&t.cloud, &t.target, HhnVariant::Minus) {
            outputs.push(*h.rotation.matrix());
        }
        let cand = solve_dram_enp(&t.cloud, &t.target).unwrap().matrix;
        for method in [CorrectionMethod::Svd, CorrectionMethod::BarItzhack] {
            outputs.push(correct(&cand, method).unwrap().corrected.to_mat3().unwrap());
        }
        for r in &outputs {
            prop_assert!(orthonormality_defect(r) < 1e-12 && (det3(r) - 1.0).abs() < 1e-12);
            prop_assert!(enp_loss(r, &t.cloud, &t.target).unwrap().value() >= best - 1e-12);
        }
    }

    #[test]
    fn correction_is_idempotent(seed in any::<u64>(), sigma in 0.0..0.3f64) {
        let t = generate_trial(seed, 0, 8, sigma).unwrap();
        let cand = solve_dram_enp(&t.cloud, &t.target).unwrap().matrix;
        for method in [CorrectionMethod::Svd, CorrectionMethod::BarItzhack] {
            let once = correct(&cand, method).unwrap().corrected;
            let twice = correct(&once, method).unwrap().corrected;
            prop_assert!(once.max_abs_diff(&twice) < 1e-12);
        }
    }

    #[test]
    fn rectangular_correction_matches_square_top_rows(seed in any::<u64>(), sigma in 0.0..0.3f64) {
        let t = generate_trial(seed, 0, 8, sigma).unwrap();
        let top = solve_dram_onp(&t.cloud, &t.image).unwrap().matrix.top_rows(2);
        let svd_rows = correct(&top, CorrectionMethod::Svd).unwrap().corrected.top_rows(2);
        let quat_rows = correct(&top, CorrectionMethod::BarItzhack).unwrap().corrected.top_rows(2);
        prop_assert!(svd_rows.max_abs_diff(&quat_rows) < 1e-10);
        let d = svd(&top).unwrap();
        let polar = d.u.matmul(&Mat::from_fn(2, 3, |i, j| if i == j { 1.0 } else { 0.0 })).matmul(&d.v.transpose());
        prop_assert!(svd_rows.max_abs_diff(&polar) < 1e-10);
    }
}

#[test]
fn exact_dram_candidates_have_zero_loss() {
    for id in 0..200 {
        let t = generate_trial(77, id, 8, 0.0).unwrap();
        let enp = solve_dram_enp(&t.cloud, &t.target).unwrap().to_mat3().unwrap();
        assert!(enp_loss(&enp, &t.cloud, &t.target).unwrap().value() < 1e-18);
        let onp = solve_dram_onp(&t.cloud, &t.image).unwrap().to_mat3().unwrap();
        assert!(onp_loss(&onp, &t.cloud, &t.image).unwrap().value() < 1e-18);
        for c in [solve_qr_map(&t.cloud, &t.image).unwrap(), solve_pinv_map(&t.cloud, &t.image).unwrap()] {
            let rows = c.rows3();
            assert!(onp_loss(&rows, &t.cloud, &t.image).unwrap().value() < 1e-18);
        }
    }
}

/// DRaM, QR-map and PINV-map agree elementwise across noise levels and
/// cloud sizes. With K = 4 the centered cloud spans three points' worth of
/// directions and can sit arbitrarily close to a plane; the candidates then
/// carry entries in the thousands and the three methods differ by their
/// rounding amplified by the conditioning of the self-covariance.
#[test]
fn dram_class_identity_across_cloud_sizes() {
    let mut failures = Vec::new();
    for k in [4usize, 8, 32] {
        let mut worst = (0.0_f64, 0.0_f64, 0u64, 0.0_f64);
        for (si, sigma) in [0.0, 0.05, 0.1, 0.3].into_iter().enumerate() {
            for id in 0..500 {
                let t = generate_trial(31 + si as u64, id, k, sigma).unwrap();
                let d = solve_dram_enp(&t.cloud, &t.target).unwrap();
                let q = solve_qr_map(&t.cloud, &t.target).unwrap();
                let p = solve_pinv_map(&t.cloud, &t.target).unwrap();
                let od = solve_dram_onp(&t.cloud, &t.image).unwrap().matrix.top_rows(2);
                let oq = solve_qr_map(&t.cloud, &t.image).unwrap();
                let op = solve_pinv_map(&t.cloud, &t.image).unwrap();
                let diff = d
                    .matrix
                    .max_abs_diff(&q.matrix)
                    .max(d.matrix.max_abs_diff(&p.matrix))
                    .max(od.max_abs_diff(&oq.matrix))
                    .max(od.max_abs_diff(&op.matrix));
                if diff > worst.0 {
                    let entry = d.matrix.as_slice().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                    worst = (diff, sigma, id, entry);
                }
            }
        }
        println!(
            "K = {k}: max |DRaM - QR|, |DRaM - PINV| = {:.3e} (sigma {}, trial {}, largest entry {:.3e})",
            worst.0, worst.1, worst.2, worst.3
        );
        if worst.0 >= 1e-8 {
            failures.push(k);
        }
    }
    assert!(failures.is_empty(), "class identity above 1e-8 for K in {failures:?}");
}

#[test]
fn noise_variance_matches_sigma() {
    let sigma = 0.2;
    let mut rng = SimRng::new(4242);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| sigma * rng.gaussian()).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "variance ratio {}", var / (sigma * sigma));
}

#[test]
fn target_noise_variance_matches_sigma() {
    let sigma = 0.1;
    let mut residuals = Vec::new();
    for id in 0..2500 {
        let t = generate_trial(5150, id, 8, sigma).unwrap();
        let r = t.rotation.matrix();
        for i in 0..8 {
            let x = t.cloud.point3(i);
            let y = t.target.point3(i);
            for a in 0..3 {
                residuals.push(y[a] - (r[a][0] * x[0] + r[a][1] * x[1] + r[a][2] * x[2]));
            }
        }
    }
    let n = residuals.len() as f64;
    let var = residuals.iter().map(|d| d * d).sum::<f64>() / n;
    assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "variance ratio {}", var / (sigma * sigma));
}

#[test]
fn random_quaternions_are_centered_on_the_sphere() {
    let mut rng = SimRng::new(8);
    let n = 100_000;
    let mut sums = [0.0; 4];
    let mut sq = [0.0; 4];
    for _ in 0..n {
        let q = random_quaternion_with(&mut rng).to_array();
        assert!((q.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12 && q[0] >= 0.0);
        for i in 0..4 {
            sums[i] += q[i];
            sq[i] += q[i] * q[i];
        }
    }
    // Uniform on S³ folded to q0 ≥ 0: E[q0] = 4/(3π), E[qi] = 0, E[qi²] = 1/4.
    assert!((sums[0] / n as f64 - 4.0 / (3.0 * std::f64::consts::PI)).abs() < 0.01);
    for i in 1..4 {
        assert!((sums[i] / n as f64).abs() < 0.01);
    }
    for s in sq {
        assert!((s / n as f64 - 0.25).abs() < 0.01);
    }
}

#[test]
fn fourteen_zero_patterns_survive_the_adjugate() {
    let mut rng = SimRng::new(14);
    let mut patterns = 0;
    for mask in 1u32..15 {
        patterns += 1;
        for _ in 0..50 {
            let mut a = [0.0; 4];
            for (i, v) in a.iter_mut().enumerate() {
                if mask & (1 << i) == 0 {
                    *v = rng.uniform_range(0.1, 1.0) * if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                }
            }
            let q = Quaternion::from_array(a).normalized().unwrap();
            let back = quat_from_adjugate(&adjugate_from_quat(q).0).unwrap();
            let same = back.to_array().iter().zip(q.to_array()).all(|(x, y)| (x - y).abs() < 1e-12);
            let flipped = back.to_array().iter().zip(q.to_array()).all(|(x, y)| (x + y).abs() < 1e-12);
            assert!(same || flipped, "mask {mask:04b}: {q:?} -> {back:?}");
        }
    }
    assert_eq!(patterns, 14);
}

#[test]
fn rmsd_outputs_are_rotations_at_any_noise() {
    for (i, sigma) in [0.0, 0.1, 0.5, 2.0].into_iter().enumerate() {
        for id in 0..100 {
            let t = generate_trial(900 + i as u64, id, 8, sigma).unwrap();
            let mut rs = vec![
                *solve_qmin(&t.cloud, &t.target).unwrap().rotation.matrix(),
                *solve_qmax(&t.cloud, &t.target).unwrap().rotation.matrix(),
                *solve_svd(&t.cloud, &t.target).unwrap().rotation.matrix(),
            ];
            if let Ok(h) = solve_hhn(&t.cloud, &t.target, HhnVariant::Minus) {
                rs.push(*h.rotation.matrix());
            }
            for (j, r) in rs.iter().enumerate() {
                let defect = orthonormality_defect(r);
                assert!(defect <= Rotation3::TOL, "sigma {sigma} trial {id} solver {j}: {defect:.3e}");
                assert!((det3(r) - 1.0).abs() <= Rotation3::TOL);
                assert!(frob3(&mat3_mul(r, &mat3_transpose(r)), &dram_pose::linalg::mat3_identity()) <= Rotation3::TOL);
            }
        }
    }
}

#[test]
fn cloud_types_interoperate() {
    let cloud = PointCloud::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, -1.0, -1.0]]);
    let target = TargetCloud::new(cloud.as_mat().clone());
    let image = OrthoImage::new(cloud.as_mat().transpose().top_rows(2).transpose());
    let c = solve_dram_enp(&cloud, &target).unwrap().to_mat3().unwrap();
    assert!(frob3(&c, &dram_pose::linalg::mat3_identity()) < 1e-12);
    let o = solve_dram_onp(&cloud, &image).unwrap().to_mat3().unwrap();
    assert!(frob3(&o, &dram_pose::linalg::mat3_identity()) < 1e-12);
}
