mod common;

use common::*;
use enmf::feasibility::optimal_row_step;
use enmf::lowrank::{randomized_svd, truncated_svd, RandomizedSvdConfig};
use enmf::rotation::{lambda_update, procrustes, z_update};
use enmf::solvers::admm_nnls;
use enmf::{frobenius_objective, masked_objective, negativity, DenseMatrix, FactorPair, ObservationMask, RngSeed};
use rand::Rng;

fn uniform(n: usize, m: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(n, m, |_, _| rng.random_range(lo..hi))
}

#[test]
fn objective_matches_double_double_reference() {
    let mut rng = RngSeed(11).rng();
    for _ in 0..20 {
        let x = uniform(17, 13, 0.0, 5.0, &mut rng);
        let f = FactorPair {
            u: uniform(17, 3, -1.0, 1.0, &mut rng),
            v: uniform(13, 3, -1.0, 1.0, &mut rng),
        };
        let want = dd_frobenius(&x, &f);
        let got = frobenius_objective(&x, &f).unwrap();
        assert!((got - want).abs() <= 1e-13 * want, "{got} vs {want}");
    }
}

#[test]
fn masked_objective_matches_entrywise_sum() {
    let mut rng = RngSeed(12).rng();
    let x = uniform(6, 6, 0.0, 2.0, &mut rng);
    let f = FactorPair {
        u: uniform(6, 2, 0.0, 1.0, &mut rng),
        v: uniform(6, 2, 0.0, 1.0, &mut rng),
    };
    let mask = ObservationMask::random(6, 6, 0.5, RngSeed(3));
    let want = masked_objective_brute(&x, &f, |i, j| mask.is_observed(i, j));
    let got = masked_objective(&x, &f, &mask).unwrap();
    assert!((got - want).abs() <= 1e-14 * want.max(1.0));
}

#[test]
fn negativity_matches_entrywise_sum() {
    let mut rng = RngSeed(13).rng();
    let w = uniform(10, 3, -1.0, 1.0, &mut rng);
    let want: f64 = w.as_slice().iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    assert!((negativity(&w) - want).abs() <= 1e-14);
}

#[test]
fn truncated_svd_beats_random_rank_five_competitors() {
    let mut rng = RngSeed(14).rng();
    let x = uniform(50, 40, 0.0, 1.0, &mut rng);
    let s = truncated_svd(&x, 5).unwrap();
    for _ in 0..100 {
        let a = FactorPair {
            u: uniform(50, 5, -1.0, 1.0, &mut rng),
            v: uniform(40, 5, -1.0, 1.0, &mut rng),
        };
        assert!(s.residual <= frobenius_objective(&x, &a).unwrap());
    }
    let jac = jacobi_singular_values(&x);
    for (a, b) in s.singular_values.iter().zip(&jac) {
        assert!((a - b).abs() <= 1e-10 * jac[0], "{a} vs {b}");
    }
    let tail: f64 = jac[5..].iter().map(|v| v * v).sum();
    assert!((s.residual.powi(2) - tail).abs() <= 1e-8 * tail);
}

#[test]
fn randomized_svd_is_near_optimal() {
    let mut rng = RngSeed(15).rng();
    let x = uniform(80, 60, 0.0, 1.0, &mut rng);
    let exact = truncated_svd(&x, 6).unwrap();
    let cfg = RandomizedSvdConfig {
        oversampling: 10,
        power_iters: 2,
        seed: RngSeed(1),
    };
    let approx = randomized_svd(&x, 6, &cfg).unwrap();
    assert!(approx.residual <= 1.05 * exact.residual);
}

#[test]
fn z_update_matches_grid_minimization() {
    let mut rng = RngSeed(16).rng();
    for _ in 0..100 {
        let b = rng.random_range(-5.0..5.0);
        let rho: f64 = rng.random_range(0.1..10.0);
        let f = |z: f64| (-z).max(0.0) + 0.5 * rho * (z - b) * (z - b);
        let z = grid_minimize(f, -20.0, 20.0, 2001, 8);
        assert!((z_update(b, rho) - z).abs() <= 1e-6, "b {b} rho {rho}");
    }
    assert_eq!(z_update(-2.0, 1.0), -1.0);
}

#[test]
fn optimal_row_step_matches_golden_section() {
    let mut rng = RngSeed(17).rng();
    for _ in 0..50 {
        let (m, r) = (rng.random_range(4..30), rng.random_range(1..6));
        let v = uniform(m, r, -1.0, 1.0, &mut rng);
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..3.0)).collect();
        let u: Vec<f64> = (0..r).map(|_| rng.random_range(-1.0..1.0)).collect();
        // gradient (u·Vᵀ − x)·V restricted to a random free set
        let res: Vec<f64> = (0..m)
            .map(|j| (0..r).map(|k| u[k] * v.get(j, k)).sum::<f64>() - x[j])
            .collect();
        let mut g: Vec<f64> = (0..r).map(|k| (0..m).map(|j| res[j] * v.get(j, k)).sum()).collect();
        for gk in g.iter_mut().skip(1) {
            if rng.random_bool(0.3) {
                *gk = 0.0;
            }
        }
        let d = optimal_row_step(&g, &v);
        let oracle = golden_section(|t| dd_row_objective(&x, &u, &g, &v, t), 0.0, 4.0 * d + 1.0, 1e-14);
        assert!((d - oracle).abs() <= 1e-8 * d.max(1.0), "{d} vs {oracle}");
        for s in [0.5, 0.9, 1.1, 2.0] {
            let at = |t| dd_row_objective(&x, &u, &g, &v, t);
            assert_ne!(at(d).cmp(at(s * d)), std::cmp::Ordering::Greater);
        }
    }
}

#[test]
fn procrustes_beats_angle_sweep() {
    let mut rng = RngSeed(18).rng();
    for _ in 0..10 {
        let w = uniform(12, 2, -1.0, 1.0, &mut rng);
        let b = uniform(12, 2, -1.0, 1.0, &mut rng);
        let r = procrustes(&w, &b).unwrap();
        let got = b.sub(&w.matmul(&r)).frobenius_norm();
        assert!(got <= procrustes_angle_sweep(&w, &b) + 1e-12);
    }
}

#[test]
fn lambda_update_matches_grid_minimization() {
    let mut rng = RngSeed(19).rng();
    let mut vec = |len: usize, lo: f64, hi: f64| -> Vec<f64> { (0..len).map(|_| rng.random_range(lo..hi)).collect() };
    for case in 0..20 {
        let (p, q) = (3 + case % 4, 2 + case % 3);
        let (w21, w11, n1) = (vec(p, 0.0, 2.0), vec(p, 0.1, 2.0), vec(p, -0.1, 0.1));
        let (w22, w12, n2) = (vec(q, 0.0, 2.0), vec(q, 0.1, 2.0), vec(q, -0.1, 0.1));
        let obj = |l: f64| {
            let a: f64 = (0..p).map(|k| (w21[k] + n1[k] - l * w11[k]).powi(2)).sum();
            let b: f64 = (0..q).map(|k| (w22[k] + n2[k] - w12[k] / l).powi(2)).sum();
            0.5 * (a + b)
        };
        let grid = grid_minimize(obj, 1e-6, 100.0, 100_001, 6);
        let got = lambda_update(&w21, &w11, &n1, &w22, &w12, &n2, 1.0);
        assert!(!got.kept_previous);
        assert!((got.value - grid).abs() <= 1e-6 * grid.max(1.0), "{} vs {grid}", got.value);
    }
    let w = [0.5, 1.5, 2.0];
    let z = [0.0; 3];
    assert!((lambda_update(&w, &w, &z, &w, &w, &z, 3.0).value - 1.0).abs() <= 1e-9);
}

#[test]
fn admm_nnls_matches_brute_force_nnls() {
    let mut rng = RngSeed(20).rng();
    let (n, m, r) = (30, 20, 4);
    let x = uniform(n, m, 0.0, 1.0, &mut rng);
    let v = uniform(m, r, 0.0, 1.0, &mut rng);
    let g = v.gram();
    let f = x.matmul(&v);
    let mut h = DenseMatrix::zeros(n, r);
    let mut dual = DenseMatrix::zeros(n, r);
    admm_nnls(&g, &f, &mut h, &mut dual, 20_000);
    let gv: Vec<Vec<f64>> = (0..r).map(|i| (0..r).map(|j| g.get(i, j)).collect()).collect();
    for i in 0..n {
        let want = nnls_brute_force(&gv, f.row(i));
        for k in 0..r {
            assert!((h.get(i, k) - want[k]).abs() <= 1e-6, "row {i}: {:?} vs {want:?}", h.row(i));
        }
    }
}
