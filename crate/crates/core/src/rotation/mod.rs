//! Moving the unconstrained optimum along its level set toward the nonnegative orthant.
//!
//! [`admm_rotate`] searches over a single orthogonal `R` (`(U⋆R, V⋆R)` keeps `U⋆V⋆ᵀ`), and
//! [`rsr_admm`] over the rotation–scale–rotation family `(U⋆R₁ΛR₂, V⋆R₁Λ⁻¹R₂)`, which can
//! reach any exact nonnegative factorization of the same product.

mod admm;
mod rsr;

use serde::{Deserialize, Serialize};

pub use admm::{admm_rotate, RotationResult};
pub use rsr::{lambda_update, rsr_admm, LambdaUpdate, RsrResult};

use crate::error::{Error, Result};
use crate::linalg::{orthogonality_residual, procrustes_rotation};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RotationConfig {
    /// ADMM penalty ρ; the dead zone of the splitting-variable update is `[−1/ρ, 0]`.
    pub rho: f64,
    pub max_iters: usize,
    /// Stop once `‖Z − W·R‖_F ≤ primal_tol · max(1, ‖W‖_F)`.
    pub primal_tol: f64,
    /// Stop once the rotated factors' negativity is at or below this value.
    pub negativity_tol: f64,
    /// Stop after this many consecutive iterations without a better iterate (0 disables).
    pub stall_iters: usize,
    /// Orthogonal rotation only: stop once an iteration lowers the negativity by less than
    /// this fraction of its previous value (0 disables).
    pub progress_tol: f64,
    /// Scaling-constraint penalty γ of the rotation–scale–rotation ADMM.
    pub gamma: f64,
    /// Penalty `t` on the `W₃ = W₂R₂` constraint of the rotation–scale–rotation ADMM.
    pub t: f64,
    /// Iteration budget of the rotation–scale–rotation ADMM.
    pub rsr_max_iters: usize,
    /// Stall window of the rotation–scale–rotation ADMM (0 disables); its negativity is far
    /// from monotone, so this is much longer than `stall_iters`.
    pub rsr_stall_iters: usize,
}

impl Default for RotationConfig {
    fn default() -> Self {
        RotationConfig {
            rho: 1.0,
            max_iters: 200,
            primal_tol: 1e-10,
            negativity_tol: 0.0,
            stall_iters: 10,
            progress_tol: 0.1,
            gamma: 1.0,
            t: 1.0,
            rsr_max_iters: 5000,
            rsr_stall_iters: 1000,
        }
    }
}

impl RotationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !(self.gamma > 0.0) || !(self.t > 0.0) {
            return Err(Error::invalid("rotation penalties rho, gamma, t must be positive"));
        }
        if self.max_iters == 0 || self.rsr_max_iters == 0 {
            return Err(Error::invalid("rotation max_iters must be at least 1"));
        }
        if !(self.primal_tol >= 0.0) || !(self.negativity_tol >= 0.0) || !(self.progress_tol >= 0.0) {
            return Err(Error::invalid("rotation tolerances must be nonnegative"));
        }
        Ok(())
    }
}

/// Minimizer of `h(z) + (ρ/2)(z − b)²` with `h(z) = max(0, −z)`.
#[inline]
pub fn z_update(b: f64, rho: f64) -> f64 {
    if b > 0.0 {
        b
    } else if b >= -1.0 / rho {
        0.0
    } else {
        b + 1.0 / rho
    }
}

/// Orthogonal Procrustes solution with a rank-deficiency flag.
#[derive(Debug, Clone)]
pub struct Procrustes {
    pub rotation: DenseMatrix,
    /// `WᵀB` had a (numerically) zero singular value; the minimizer is not unique.
    pub rank_deficient: bool,
}

/// Orthogonal `R` minimizing `‖B − W·R‖_F`.
pub fn procrustes(w: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(procrustes_checked(w, b)?.rotation)
}

pub fn procrustes_checked(w: &DenseMatrix, b: &DenseMatrix) -> Result<Procrustes> {
    if w.shape() != b.shape() {
        return Err(Error::dims(format!(
            "procrustes shapes differ: {:?} vs {:?}",
            w.shape(),
            b.shape()
        )));
    }
    let (rotation, min_sigma) = procrustes_rotation(w, b)?;
    if !rotation.is_finite() {
        return Err(Error::NonFinite("procrustes rotation".into()));
    }
    let scale = w.frobenius_norm() * b.frobenius_norm();
    Ok(Procrustes {
        rotation,
        rank_deficient: min_sigma <= 1e-12 * scale.max(f64::MIN_POSITIVE),
    })
}

/// `‖RᵀR − I‖_F²`, re-exported for diagnostics.
pub fn orthogonality_error(r: &DenseMatrix) -> f64 {
    orthogonality_residual(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_update_branches() {
        assert_eq!(z_update(0.5, 1.0), 0.5);
        assert_eq!(z_update(-0.5, 1.0), 0.0);
        assert_eq!(z_update(-2.0, 1.0), -1.0);
        assert_eq!(z_update(-1.0, 1.0), 0.0);
        assert_eq!(z_update(-0.3, 2.0), 0.0);
        assert_eq!(z_update(-0.75, 2.0), -0.25);
    }

    #[test]
    fn procrustes_identity_when_targets_match() {
        let w = DenseMatrix::from_fn(7, 3, |i, j| ((i * 3 + j * 5) % 7) as f64 - 2.0);
        let r = procrustes(&w, &w).unwrap();
        assert!(w.matmul(&r).sub(&w).frobenius_norm() <= 1e-10);
        assert!(orthogonality_error(&r) <= 1e-20);
    }

    #[test]
    fn procrustes_flags_rank_deficiency() {
        let w = DenseMatrix::from_fn(5, 2, |i, _| i as f64);
        let b = DenseMatrix::from_fn(5, 2, |i, j| if j == 0 { i as f64 } else { 0.0 });
        let p = procrustes_checked(&w, &b).unwrap();
        assert!(p.rank_deficient);
        assert!(orthogonality_error(&p.rotation) < 1e-20);
        assert!(procrustes(&w, &DenseMatrix::zeros(4, 2)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RotationConfig::default().validate().is_ok());
        let bad = RotationConfig {
            rho: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
