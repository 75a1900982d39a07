use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse, thin_svd};
use crate::matrix::{DenseMatrix, FactorPair};

/// `B.U ≈ A.U·R₁ΛR₂ᵀ`, `B.V ≈ A.V·R₁Λ⁻¹R₂ᵀ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneralizedTransform {
    pub r1: DenseMatrix,
    pub lambda: Vec<f64>,
    pub r2: DenseMatrix,
    pub delta_u: f64,
    pub delta_v: f64,
    /// `A.U` was numerically rank deficient and its pseudo-inverse was used.
    pub rank_deficient: bool,
}

impl GeneralizedTransform {
    /// `R₁ΛR₂ᵀ`.
    pub fn u_map(&self) -> DenseMatrix {
        self.r1.scale_columns(&self.lambda).matmul_t(&self.r2)
    }

    /// `R₁Λ⁻¹R₂ᵀ` (zero scalings map to zero).
    pub fn v_map(&self) -> DenseMatrix {
        let inv: Vec<f64> = self
            .lambda
            .iter()
            .map(|l| if *l > 0.0 { 1.0 / l } else { 0.0 })
            .collect();
        self.r1.scale_columns(&inv).matmul_t(&self.r2)
    }
}

/// Recovers the rotation–scale–rotation map from `A` to `B` via the SVD of `A.U⁺·B.U`.
pub fn generalized_transform(a: &FactorPair, b: &FactorPair) -> Result<GeneralizedTransform> {
    if a.u.shape() != b.u.shape() || a.v.shape() != b.v.shape() {
        return Err(Error::dims("generalized transform needs equally shaped factor pairs"));
    }
    let s = thin_svd(&a.u)?;
    let top = s.sigma.first().copied().unwrap_or(0.0);
    let r = a.rank();
    let floor = top * (a.u.rows().max(r) as f64) * f64::EPSILON;
    let rank_deficient = s.sigma.len() < r || s.sigma.iter().any(|v| *v <= floor);

    let z = pseudo_inverse(&a.u).matmul(&b.u);
    let zs = thin_svd(&z)?;
    let t = GeneralizedTransform {
        r1: zs.u,
        lambda: zs.sigma,
        r2: zs.v,
        delta_u: 0.0,
        delta_v: 0.0,
        rank_deficient,
    };
    let delta_u = b.u.sub(&a.u.matmul(&t.u_map())).frobenius_norm();
    let delta_v = b.v.sub(&a.v.matmul(&t.v_map())).frobenius_norm();
    Ok(GeneralizedTransform {
        delta_u,
        delta_v,
        ..t
    })
}
