use serde::{Deserialize, Serialize};

use super::{procrustes_checked, z_update, RotationConfig};
use crate::error::{Error, Result};
use crate::linalg::{orthogonal_polar_factor, orthogonality_residual};
use crate::matrix::{DenseMatrix, FactorPair};
use crate::metrics::negativity;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotationResult {
    /// Orthogonal `r×r` rotation, applied as `(U·R, V·R)`.
    pub r: DenseMatrix,
    /// ADMM iterations performed.
    pub iterations: usize,
    /// Iteration at which the returned (best) rotation was produced; 0 means `R = I`.
    pub best_iteration: usize,
    /// `‖RᵀR − I‖_F²` of the returned rotation.
    pub orthogonality_residual: f64,
    pub initial_negativity: f64,
    pub final_negativity: f64,
    pub final_primal_residual: f64,
    /// Some Procrustes subproblem was rank deficient.
    pub rank_deficient_steps: usize,
}

impl RotationResult {
    pub fn apply(&self, f: &FactorPair) -> FactorPair {
        f.rotate(&self.r)
    }
}

/// ADMM for `min Σ h(Z_ij)` subject to `Z = W·R`, `RᵀR = I`, with `W = [U; V]`.
///
/// Each iteration performs the elementwise splitting-variable update on `b = W·R − Y/ρ`,
/// the Procrustes rotation update toward `Z + Y/ρ`, and the dual ascent
/// `Y ← Y + ρ(Z − W·R)`. Starts from `R = I`, `Y = 0` and returns the least-negative
/// iterate seen, re-projected onto the orthogonal group.
pub fn admm_rotate(start: &FactorPair, cfg: &RotationConfig) -> Result<RotationResult> {
    cfg.validate()?;
    let w = start.stacked();
    let r_dim = start.rank();
    let rho = cfg.rho;
    let w_norm = w.frobenius_norm();
    let primal_limit = cfg.primal_tol * w_norm.max(1.0);

    let mut rot = DenseMatrix::identity(r_dim);
    let mut wr = w.clone();
    let mut y = DenseMatrix::zeros(w.rows(), r_dim);
    let initial_negativity = negativity(&w);

    let mut best_r = rot.clone();
    let mut best_neg = initial_negativity;
    let mut best_iteration = 0;
    let mut iterations = 0;
    let mut primal = f64::INFINITY;
    let mut rank_deficient_steps = 0;
    let mut since_best = 0usize;
    let mut prev_neg = initial_negativity;

    if initial_negativity > cfg.negativity_tol {
        let mut z = DenseMatrix::zeros(w.rows(), r_dim);
        let mut target = DenseMatrix::zeros(w.rows(), r_dim);
        while iterations < cfg.max_iters {
            iterations += 1;
            for ((zv, wrv), yv) in z
                .as_mut_slice()
                .iter_mut()
                .zip(wr.as_slice())
                .zip(y.as_slice())
            {
                *zv = z_update(wrv - yv / rho, rho);
            }
            for ((tv, zv), yv) in target
                .as_mut_slice()
                .iter_mut()
                .zip(z.as_slice())
                .zip(y.as_slice())
            {
                *tv = zv + yv / rho;
            }
            let p = procrustes_checked(&w, &target)?;
            if p.rank_deficient {
                rank_deficient_steps += 1;
            }
            rot = p.rotation;
            wr = w.matmul(&rot);
            let mut primal_sq = 0.0;
            for ((yv, zv), wrv) in y
                .as_mut_slice()
                .iter_mut()
                .zip(z.as_slice())
                .zip(wr.as_slice())
            {
                let d = zv - wrv;
                primal_sq += d * d;
                *yv += rho * d;
            }
            primal = primal_sq.sqrt();
            if !primal.is_finite() || !y.is_finite() {
                return Err(Error::NonFinite(format!(
                    "rotation ADMM diverged at iteration {iterations}"
                )));
            }

            let neg = negativity(&wr);
            let stalled = prev_neg - neg < cfg.progress_tol * prev_neg;
            prev_neg = neg;
            if neg < best_neg {
                best_neg = neg;
                best_r = rot.clone();
                best_iteration = iterations;
                since_best = 0;
            } else {
                since_best += 1;
            }
            if best_neg <= cfg.negativity_tol || primal <= primal_limit {
                break;
            }
            if cfg.stall_iters > 0 && since_best >= cfg.stall_iters {
                break;
            }
            if stalled {
                break;
            }
        }
    }

    let r = if best_iteration == 0 {
        best_r
    } else {
        orthogonal_polar_factor(&best_r)?
    };
    let final_negativity = negativity(&w.matmul(&r));
    Ok(RotationResult {
        orthogonality_residual: orthogonality_residual(&r),
        r,
        iterations,
        best_iteration,
        initial_negativity,
        final_negativity,
        final_primal_residual: primal,
        rank_deficient_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::frobenius_objective;

    fn planted(seed: u64) -> (FactorPair, DenseMatrix) {
        use rand::Rng;
        let mut rng = crate::RngSeed(seed).rng();
        let u = DenseMatrix::from_fn(30, 3, |_, _| rng.random::<f64>());
        let v = DenseMatrix::from_fn(20, 3, |_, _| rng.random::<f64>());
        let g = DenseMatrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5);
        let q = orthogonal_polar_factor(&g).unwrap();
        (FactorPair { u, v }, q)
    }

    #[test]
    fn nonnegative_start_is_accepted_immediately() {
        let (f, _) = planted(1);
        let res = admm_rotate(&f, &RotationConfig::default()).unwrap();
        assert_eq!(res.iterations, 0);
        assert_eq!(res.r, DenseMatrix::identity(3));
        assert_eq!(res.final_negativity, 0.0);
    }

    #[test]
    fn never_worse_than_identity_and_keeps_objective() {
        let (f, q) = planted(2);
        let x = f.product();
        let rotated = f.rotate(&q.transpose());
        let res = admm_rotate(&rotated, &RotationConfig::default()).unwrap();
        assert!(res.final_negativity <= res.initial_negativity);
        assert!(res.orthogonality_residual <= 1e-20);
        let after = res.apply(&rotated);
        let err = frobenius_objective(&x, &after).unwrap();
        assert!(err <= 1e-9 * x.frobenius_norm());
    }
}
