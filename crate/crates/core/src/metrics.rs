//! Reconstruction errors, gradients of `½‖X − UVᵀ‖²`, and the negativity measure.

use crate::error::{Error, Result};
use crate::mask::ObservationMask;
use crate::matrix::{sum_squares, DenseMatrix, FactorPair};

/// `‖X − U·Vᵀ‖_F` (the norm itself, without the ½ or the square).
pub fn frobenius_objective(x: &DenseMatrix, f: &FactorPair) -> Result<f64> {
    f.check_against(x)?;
    Ok(residual(x, f).frobenius_norm())
}

/// Ratio of the factorization error to the rank-r truncated-SVD error.
pub fn relative_error(x: &DenseMatrix, f: &FactorPair, svd_baseline: f64) -> Result<f64> {
    let numerator = frobenius_objective(x, f)?;
    ratio_to_baseline(numerator, svd_baseline)
}

pub(crate) fn ratio_to_baseline(numerator: f64, svd_baseline: f64) -> Result<f64> {
    if !(svd_baseline >= 0.0) {
        return Err(Error::invalid(format!(
            "svd baseline must be nonnegative, got {svd_baseline}"
        )));
    }
    if svd_baseline == 0.0 {
        if numerator == 0.0 {
            return Ok(1.0);
        }
        return Err(Error::ExactRank { numerator });
    }
    Ok(numerator / svd_baseline)
}

/// Frobenius error restricted to the observed entries of `mask`.
pub fn masked_objective(x: &DenseMatrix, f: &FactorPair, mask: &ObservationMask) -> Result<f64> {
    f.check_against(x)?;
    mask.check_shape(x)?;
    Ok(masked_residual(x, f, mask).frobenius_norm())
}

/// `Σ max(0, −W_ij)`: the L1 distance of `W` to the nonnegative orthant.
pub fn negativity(w: &DenseMatrix) -> f64 {
    crate::matrix::kahan_sum(w.as_slice().iter().map(|v| (-v).max(0.0)))
}

/// Residual `U·Vᵀ − X` (the sign used by the gradients).
pub fn residual(x: &DenseMatrix, f: &FactorPair) -> DenseMatrix {
    let mut r = f.product();
    for (ri, xi) in r.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *ri -= xi;
    }
    r
}

/// `M_E ∘ (U·Vᵀ − X)`; unobserved entries of `X` are never read.
pub fn masked_residual(x: &DenseMatrix, f: &FactorPair, mask: &ObservationMask) -> DenseMatrix {
    if mask.is_full() {
        return residual(x, f);
    }
    let (n, m) = x.shape();
    let mut r = DenseMatrix::zeros(n, m);
    for i in 0..n {
        let urow = f.u.row(i);
        let obs = mask.row(i);
        let xrow = x.row(i);
        let out = r.row_mut(i);
        for j in 0..m {
            if obs[j] {
                out[j] = crate::matrix::dot(urow, f.v.row(j)) - xrow[j];
            }
        }
    }
    r
}

/// Gradients `(∇_U f, ∇_V f) = ((UVᵀ−X)V, (UVᵀ−X)ᵀU)` of `½‖X − UVᵀ‖²`, from a precomputed residual.
pub fn gradients_from_residual(r: &DenseMatrix, f: &FactorPair) -> (DenseMatrix, DenseMatrix) {
    (r.matmul(&f.v), r.t_matmul(&f.u))
}

/// Objective and gradients in a single residual evaluation.
pub struct Evaluation {
    pub objective: f64,
    pub grad_u: DenseMatrix,
    pub grad_v: DenseMatrix,
}

pub fn evaluate(x: &DenseMatrix, f: &FactorPair, mask: Option<&ObservationMask>) -> Evaluation {
    let r = match mask {
        Some(m) => masked_residual(x, f, m),
        None => residual(x, f),
    };
    let objective = sum_squares(r.as_slice()).sqrt();
    let (grad_u, grad_v) = gradients_from_residual(&r, f);
    Evaluation {
        objective,
        grad_u,
        grad_v,
    }
}
