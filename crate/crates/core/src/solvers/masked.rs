use crate::error::Result;
use crate::feasibility::{pbcd, StepMode};
use crate::mask::{ObservationMask, SignMask};
use crate::matrix::{DenseMatrix, FactorPair};

use super::runner::Stepper;

/// Masked projected block coordinate descent over all entries of `U`, then `V`.
///
/// The data is zero-filled on construction, so unobserved entries are never read again.
pub struct MaskedPbcd {
    f: FactorPair,
    x: DenseMatrix,
    xt: DenseMatrix,
    mask: ObservationMask,
    mask_t: ObservationMask,
    inner: usize,
}

impl MaskedPbcd {
    pub fn new(x: &DenseMatrix, mask: &ObservationMask, start: FactorPair, inner: usize) -> Self {
        let xz = mask.zero_fill(x);
        MaskedPbcd {
            f: start,
            xt: xz.transpose(),
            x: xz,
            mask: mask.clone(),
            mask_t: mask.transpose(),
            inner: inner.max(1),
        }
    }
}

impl Stepper for MaskedPbcd {
    fn step(&mut self, _x: &DenseMatrix) -> Result<()> {
        let free = SignMask::all_ones(self.f.u.rows(), self.f.u.cols());
        let (u, _) = pbcd(
            &self.x,
            &self.f.u,
            &self.f.v,
            0.0,
            self.inner,
            StepMode::Optimal,
            &free,
            &self.mask,
        )?;
        self.f.u = u;
        let free = SignMask::all_ones(self.f.v.rows(), self.f.v.cols());
        let (v, _) = pbcd(
            &self.xt,
            &self.f.v,
            &self.f.u,
            0.0,
            self.inner,
            StepMode::Optimal,
            &free,
            &self.mask_t,
        )?;
        self.f.v = v;
        Ok(())
    }

    fn factors(&self) -> &FactorPair {
        &self.f
    }
}
