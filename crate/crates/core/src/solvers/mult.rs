use crate::error::Result;
use crate::mask::ObservationMask;
use crate::matrix::{DenseMatrix, FactorPair};
use crate::metrics::masked_residual;

use super::runner::Stepper;

/// Entries at or below this value are raised to it before multiplicative updates.
pub const MULT_FLOOR: f64 = 1e-16;

/// Lee–Seung multiplicative updates for the Frobenius objective, optionally restricted to the
/// observed entries of a mask.
pub struct Mult {
    f: FactorPair,
    mask: Option<ObservationMask>,
    bumped: usize,
}

impl Mult {
    pub fn new(start: FactorPair) -> Self {
        Self::build(start, None)
    }

    /// Masked variant: `U ← U ∘ (M∘X)V / (M∘(UVᵀ))V` and symmetrically for `V`.
    pub fn masked(start: FactorPair, mask: ObservationMask) -> Self {
        Self::build(start, Some(mask))
    }

    fn build(mut start: FactorPair, mask: Option<ObservationMask>) -> Self {
        let mut bumped = 0;
        for m in [&mut start.u, &mut start.v] {
            for v in m.as_mut_slice() {
                if *v <= MULT_FLOOR {
                    *v = MULT_FLOOR;
                    bumped += 1;
                }
            }
        }
        Mult {
            f: start,
            mask,
            bumped,
        }
    }
}

fn multiply(a: &mut DenseMatrix, num: &DenseMatrix, den: &DenseMatrix) {
    for ((av, nv), dv) in a
        .as_mut_slice()
        .iter_mut()
        .zip(num.as_slice())
        .zip(den.as_slice())
    {
        if *dv > 0.0 {
            *av *= nv / dv;
        }
    }
}

impl Stepper for Mult {
    fn step(&mut self, x: &DenseMatrix) -> Result<()> {
        match &self.mask {
            None => {
                let FactorPair { u, v } = &mut self.f;
                let num = x.matmul(v);
                let den = u.matmul(&v.gram());
                multiply(u, &num, &den);
                let num = x.t_matmul(u);
                let den = v.matmul(&u.gram());
                multiply(v, &num, &den);
            }
            Some(mask) => {
                let xm = mask.zero_fill(x);
                let num = xm.matmul(&self.f.v);
                // (M∘UVᵀ) = M∘(UVᵀ − X) + M∘X
                let est = masked_residual(x, &self.f, mask).add(&xm);
                let den = est.matmul(&self.f.v);
                multiply(&mut self.f.u, &num, &den);
                let num = xm.t_matmul(&self.f.u);
                let est = masked_residual(x, &self.f, mask).add(&xm);
                let den = est.t_matmul(&self.f.u);
                multiply(&mut self.f.v, &num, &den);
            }
        }
        Ok(())
    }

    fn factors(&self) -> &FactorPair {
        &self.f
    }

    fn warnings(&self) -> Vec<String> {
        if self.bumped > 0 {
            vec![format!(
                "{} nonpositive initial entries raised to {MULT_FLOOR:e}",
                self.bumped
            )]
        } else {
            Vec::new()
        }
    }
}
