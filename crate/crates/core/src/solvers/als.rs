use crate::error::Result;
use crate::linalg::solve_gram_right;
use crate::matrix::{DenseMatrix, FactorPair};

use super::runner::Stepper;

/// Unconstrained least squares per block via the normal equations, then projection onto the
/// orthant. Not monotone in general.
pub struct AlsProjected {
    f: FactorPair,
    ridged: usize,
}

impl AlsProjected {
    pub fn new(start: FactorPair) -> Self {
        AlsProjected { f: start, ridged: 0 }
    }
}

impl Stepper for AlsProjected {
    fn step(&mut self, x: &DenseMatrix) -> Result<()> {
        let (u, ridged) = solve_gram_right(&self.f.v.gram(), &x.matmul(&self.f.v));
        self.ridged += ridged as usize;
        self.f.u = u.positive_part();
        let (v, ridged) = solve_gram_right(&self.f.u.gram(), &x.t_matmul(&self.f.u));
        self.ridged += ridged as usize;
        self.f.v = v.positive_part();
        Ok(())
    }

    fn factors(&self) -> &FactorPair {
        &self.f
    }

    fn warnings(&self) -> Vec<String> {
        if self.ridged > 0 {
            vec![format!(
                "{} singular normal equations solved with a 1e-10·trace ridge",
                self.ridged
            )]
        } else {
            Vec::new()
        }
    }
}
