use serde::{Deserialize, Serialize};

use super::{procrustes_checked, z_update, RotationConfig};
use crate::error::{Error, Result};
use crate::linalg::{orthogonality_residual, real_polynomial_roots};
use crate::matrix::{dot, DenseMatrix, FactorPair};
use crate::metrics::negativity;

const LAMBDA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RsrResult {
    pub r1: DenseMatrix,
    /// Diagonal of `Λ`.
    pub lambda: Vec<f64>,
    pub r2: DenseMatrix,
    pub iterations: usize,
    pub best_iteration: usize,
    pub initial_negativity: f64,
    /// `negativity(U⋆R₁ΛR₂) + negativity(V⋆R₁Λ⁻¹R₂)` of the returned transform.
    pub final_negativity: f64,
    pub r1_orthogonality: f64,
    pub r2_orthogonality: f64,
    /// Λ entries clamped at the positivity floor.
    pub clamped_lambdas: usize,
    pub warnings: Vec<String>,
}

impl RsrResult {
    /// `(U⋆R₁ΛR₂, V⋆R₁Λ⁻¹R₂)`.
    pub fn apply(&self, f: &FactorPair) -> FactorPair {
        let inv: Vec<f64> = self.lambda.iter().map(|l| 1.0 / l).collect();
        let tu = self.r1.scale_columns(&self.lambda).matmul(&self.r2);
        let tv = self.r1.scale_columns(&inv).matmul(&self.r2);
        FactorPair {
            u: f.u.matmul(&tu),
            v: f.v.matmul(&tv),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaUpdate {
    pub value: f64,
    /// No positive stationary point existed; `value` is the previous λ.
    pub kept_previous: bool,
}

/// Column objective `½‖w21 + n1 − λ·w11‖² + ½‖w22 + n2 − w12/λ‖²`.
pub(crate) fn lambda_objective(
    lambda: f64,
    w21: &[f64],
    w11: &[f64],
    n1: &[f64],
    w22: &[f64],
    w12: &[f64],
    n2: &[f64],
) -> f64 {
    let mut a = 0.0;
    for k in 0..w11.len() {
        let d = w21[k] + n1[k] - lambda * w11[k];
        a += d * d;
    }
    let mut b = 0.0;
    for k in 0..w12.len() {
        let d = w22[k] + n2[k] - w12[k] / lambda;
        b += d * d;
    }
    0.5 * (a + b)
}

/// Scaling update for one column of `Λ`.
///
/// Stationarity of the column objective gives the quartic
/// `‖w11‖²λ⁴ − (w21+n1)ᵀw11·λ³ + (w22+n2)ᵀw12·λ − ‖w12‖² = 0`; its positive real roots are
/// found from the companion matrix and the one with the lowest objective is returned.
pub fn lambda_update(
    w21: &[f64],
    w11: &[f64],
    n1: &[f64],
    w22: &[f64],
    w12: &[f64],
    n2: &[f64],
    previous: f64,
) -> LambdaUpdate {
    let a4 = dot(w11, w11);
    let a0 = dot(w12, w12);
    let c1: Vec<f64> = w21.iter().zip(n1).map(|(a, b)| a + b).collect();
    let c2: Vec<f64> = w22.iter().zip(n2).map(|(a, b)| a + b).collect();
    let a3 = dot(&c1, w11);
    let a1 = dot(&c2, w12);
    let obj = |l: f64| lambda_objective(l, w21, w11, n1, w22, w12, n2);

    let coeffs = [-a0, a1, 0.0, -a3, a4];
    let mut best: Option<(f64, f64)> = None;
    for root in real_polynomial_roots(&coeffs, 1e-7) {
        if root > 0.0 && root.is_finite() {
            let v = obj(root);
            if best.map_or(true, |(_, bv)| v < bv) {
                best = Some((root, v));
            }
        }
    }
    if best.is_none() && a4 > 0.0 && a0 > 0.0 {
        // a positive minimizer exists (objective blows up at both ends); log-grid fallback
        best = log_grid_minimum(&obj);
    }
    match best {
        Some((value, _)) => LambdaUpdate {
            value,
            kept_previous: false,
        },
        None => LambdaUpdate {
            value: previous,
            kept_previous: true,
        },
    }
}

fn log_grid_minimum(obj: &impl Fn(f64) -> f64) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    let steps = 2000;
    for k in 0..=steps {
        let l = 10f64.powf(-8.0 + 16.0 * k as f64 / steps as f64);
        let v = obj(l);
        if v.is_finite() && best.map_or(true, |(_, bv)| v < bv) {
            best = Some((l, v));
        }
    }
    // golden-section refinement inside the bracketing grid cells
    let (l0, _) = best?;
    let (mut lo, mut hi) = (l0 / 10f64.powf(16.0 / steps as f64), l0 * 10f64.powf(16.0 / steps as f64));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if obj(a) < obj(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let l = 0.5 * (lo + hi);
    Some((l, obj(l)))
}

fn column(m: &DenseMatrix, j: usize) -> Vec<f64> {
    m.col(j)
}

fn transformed_negativity(
    ustar: &DenseMatrix,
    vstar: &DenseMatrix,
    r1: &DenseMatrix,
    lambda: &[f64],
    r2: &DenseMatrix,
) -> f64 {
    let inv: Vec<f64> = lambda.iter().map(|l| 1.0 / l).collect();
    let tu = r1.scale_columns(lambda).matmul(r2);
    let tv = r1.scale_columns(&inv).matmul(r2);
    negativity(&ustar.matmul(&tu)) + negativity(&vstar.matmul(&tv))
}

/// ADMM over the rotation–scale–rotation family for exact nonnegative factorization.
///
/// Splitting variables `W₁ = W_svd·R₁`, `W₂ = [W₁₁Λ; W₁₂Λ⁻¹]`, `W₃ = W₂R₂` with scaled duals
/// `M`, `N`, `P`. Each sweep updates `(W₁, W₃)`, then `(W₂, R₁)`, then `(R₂, Λ)`, then the
/// three duals; the least-negative transform seen is returned.
pub fn rsr_admm(start: &FactorPair, cfg: &RotationConfig) -> Result<RsrResult> {
    cfg.validate()?;
    let n = start.u.rows();
    let r = start.rank();
    let wsvd = start.stacked();
    let total = wsvd.rows();
    let (rho, gamma, t) = (cfg.rho, cfg.gamma, cfg.t);

    let mut r1 = DenseMatrix::identity(r);
    let mut r2 = DenseMatrix::identity(r);
    let mut lambda = vec![1.0; r];
    let mut w1 = wsvd.clone();
    let mut w2 = wsvd.clone();
    let mut w3 = wsvd.clone();
    let mut m_dual = DenseMatrix::zeros(total, r);
    let mut n_dual = DenseMatrix::zeros(total, r);
    let mut p_dual = DenseMatrix::zeros(total, r);

    let initial_negativity = negativity(&wsvd);
    let mut best = (r1.clone(), lambda.clone(), r2.clone());
    let mut best_neg = initial_negativity;
    let mut best_iteration = 0;
    let mut iterations = 0;
    let mut clamped = 0usize;
    let mut kept_previous = 0usize;
    let mut rank_deficient = 0usize;
    let mut since_best = 0usize;

    while best_neg > cfg.negativity_tol && iterations < cfg.rsr_max_iters {
        iterations += 1;

        // (W₁, W₃): W₃ elementwise dead-zone update, W₁ elementwise closed forms
        let w2r2 = w2.matmul(&r2);
        for ((o, a), p) in w3
            .as_mut_slice()
            .iter_mut()
            .zip(w2r2.as_slice())
            .zip(p_dual.as_slice())
        {
            *o = z_update(a - p, t);
        }
        let wsvd_r1 = wsvd.matmul(&r1);
        for i in 0..total {
            let upper = i < n;
            for j in 0..r {
                let l = lambda[j];
                let anchor = wsvd_r1.get(i, j) - m_dual.get(i, j);
                let link = w2.get(i, j) + n_dual.get(i, j);
                let v = if upper {
                    (rho * anchor + gamma * l * link) / (rho + gamma * l * l)
                } else {
                    (rho * anchor + gamma / l * link) / (rho + gamma / (l * l))
                };
                w1.set(i, j, v);
            }
        }

        // (W₂, R₁)
        let p = procrustes_checked(&wsvd, &w1.add(&m_dual))?;
        rank_deficient += p.rank_deficient as usize;
        let r1_next = p.rotation;
        let w3p_r2t = w3.add(&p_dual).matmul_t(&r2);
        for i in 0..total {
            let upper = i < n;
            for j in 0..r {
                let scale = if upper { lambda[j] } else { 1.0 / lambda[j] };
                let v = (gamma * w1.get(i, j) * scale - gamma * n_dual.get(i, j)
                    + t * w3p_r2t.get(i, j))
                    / (gamma + t);
                w2.set(i, j, v);
            }
        }
        r1 = r1_next;

        // (R₂, Λ)
        let p = procrustes_checked(&w2, &w3.add(&p_dual))?;
        rank_deficient += p.rank_deficient as usize;
        r2 = p.rotation;
        let (w1u, w1v) = w1.split_rows(n);
        let (w2u, w2v) = w2.split_rows(n);
        let (nu, nv) = n_dual.split_rows(n);
        for j in 0..r {
            let upd = lambda_update(
                &column(&w2u, j),
                &column(&w1u, j),
                &column(&nu, j),
                &column(&w2v, j),
                &column(&w1v, j),
                &column(&nv, j),
                lambda[j],
            );
            kept_previous += upd.kept_previous as usize;
            let mut l = upd.value;
            if !(l >= LAMBDA_FLOOR) {
                l = LAMBDA_FLOOR;
                clamped += 1;
            }
            lambda[j] = l;
        }

        // duals
        let wsvd_r1 = wsvd.matmul(&r1);
        for ((md, a), b) in m_dual
            .as_mut_slice()
            .iter_mut()
            .zip(w1.as_slice())
            .zip(wsvd_r1.as_slice())
        {
            *md += a - b;
        }
        for i in 0..total {
            let upper = i < n;
            for j in 0..r {
                let scale = if upper { lambda[j] } else { 1.0 / lambda[j] };
                let d = w2.get(i, j) - w1.get(i, j) * scale;
                n_dual.set(i, j, n_dual.get(i, j) + d);
            }
        }
        let w2r2 = w2.matmul(&r2);
        for ((pd, a), b) in p_dual
            .as_mut_slice()
            .iter_mut()
            .zip(w3.as_slice())
            .zip(w2r2.as_slice())
        {
            *pd += a - b;
        }
        if !m_dual.is_finite() || !n_dual.is_finite() || !p_dual.is_finite() {
            return Err(Error::NonFinite(format!(
                "rotation-scale-rotation ADMM diverged at iteration {iterations}"
            )));
        }

        let neg = transformed_negativity(&start.u, &start.v, &r1, &lambda, &r2);
        if neg < best_neg {
            best_neg = neg;
            best = (r1.clone(), lambda.clone(), r2.clone());
            best_iteration = iterations;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if cfg.rsr_stall_iters > 0 && since_best >= cfg.rsr_stall_iters {
            break;
        }
    }

    let mut warnings = Vec::new();
    if clamped > 0 {
        warnings.push(format!("{clamped} scaling entries clamped at {LAMBDA_FLOOR:e}"));
    }
    if kept_previous > 0 {
        warnings.push(format!(
            "{kept_previous} scaling updates had no positive stationary point"
        ));
    }
    if rank_deficient > 0 {
        warnings.push(format!("{rank_deficient} rank-deficient Procrustes steps"));
    }
    let (r1, lambda, r2) = best;
    Ok(RsrResult {
        r1_orthogonality: orthogonality_residual(&r1),
        r2_orthogonality: orthogonality_residual(&r2),
        final_negativity: transformed_negativity(&start.u, &start.v, &r1, &lambda, &r2),
        r1,
        lambda,
        r2,
        iterations,
        best_iteration,
        initial_negativity,
        clamped_lambdas: clamped,
        warnings,
    })
}
