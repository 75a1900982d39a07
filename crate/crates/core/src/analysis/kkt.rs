use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::ObservationMask;
use crate::matrix::{kahan_sum, DenseMatrix, FactorPair};
use crate::metrics::{gradients_from_residual, masked_residual};

/// First-order optimality residuals of `½‖X − UVᵀ‖²` under `U, V ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `max |∇W ⊙ W|` over `W = [U; V]`.
    pub delta_w: f64,
    /// `Σ |∇W ⊙ W|`.
    pub sigma_w: f64,
    pub min_entry: f64,
    /// Smallest gradient entry over coordinates equal to zero; `None` when no entry is zero.
    pub min_grad_on_zero: Option<f64>,
}

impl KktResiduals {
    /// Complementarity residuals within `tol`, primal feasibility, and dual feasibility
    /// (`∇ ≥ −tol`) on the zero set.
    pub fn satisfied(&self, tol: f64) -> bool {
        self.delta_w <= tol
            && self.sigma_w <= tol
            && self.min_entry >= 0.0
            && self.min_grad_on_zero.map_or(true, |g| g >= -tol)
    }

    pub(crate) fn from_gradients(f: &FactorPair, grad_u: &DenseMatrix, grad_v: &DenseMatrix) -> Self {
        let mut delta: f64 = 0.0;
        let mut products = Vec::with_capacity(f.u.len() + f.v.len());
        let mut min_grad_on_zero: Option<f64> = None;
        for (w, g) in [(&f.u, grad_u), (&f.v, grad_v)] {
            for (wv, gv) in w.as_slice().iter().zip(g.as_slice()) {
                let p = (wv * gv).abs();
                delta = delta.max(p);
                products.push(p);
                if *wv == 0.0 {
                    min_grad_on_zero = Some(min_grad_on_zero.map_or(*gv, |m: f64| m.min(*gv)));
                }
            }
        }
        KktResiduals {
            delta_w: delta,
            sigma_w: kahan_sum(products),
            min_entry: f.u.min_entry().min(f.v.min_entry()),
            min_grad_on_zero,
        }
    }
}

/// KKT residuals of a feasible factor pair.
pub fn kkt_residuals(x: &DenseMatrix, f: &FactorPair) -> Result<KktResiduals> {
    masked_kkt_residuals(x, f, &ObservationMask::full(x.rows(), x.cols()))
}

/// KKT residuals of `½‖M_E ∘ (X − UVᵀ)‖²`.
pub fn masked_kkt_residuals(
    x: &DenseMatrix,
    f: &FactorPair,
    mask: &ObservationMask,
) -> Result<KktResiduals> {
    f.check_against(x)?;
    mask.check_shape(x)?;
    if !f.is_feasible() {
        return Err(Error::Validation(format!(
            "KKT residuals need a feasible pair; min entry is {}",
            f.u.min_entry().min(f.v.min_entry())
        )));
    }
    let r = masked_residual(x, f, mask);
    let (gu, gv) = gradients_from_residual(&r, f);
    Ok(KktResiduals::from_gradients(f, &gu, &gv))
}
