//! Binary masks: sign masks over factor entries and observation masks over data entries.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::RngSeed;

/// Marks the entries of a matrix that were nonnegative when the mask was built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl SignMask {
    pub fn of(target: &DenseMatrix) -> SignMask {
        SignMask {
            rows: target.rows(),
            cols: target.cols(),
            bits: target.as_slice().iter().map(|v| *v >= 0.0).collect(),
        }
    }

    pub fn all_ones(rows: usize, cols: usize) -> SignMask {
        SignMask {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_free(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_all_ones(&self) -> bool {
        self.bits.iter().all(|b| *b)
    }

    pub fn count_free(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn to_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| {
            if self.is_free(i, j) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Observed-entry indicator for matrix completion (`M_E`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
    observed: usize,
}

impl ObservationMask {
    pub fn full(rows: usize, cols: usize) -> ObservationMask {
        ObservationMask {
            rows,
            cols,
            bits: vec![true; rows * cols],
            observed: rows * cols,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                bits.push(f(i, j));
            }
        }
        let observed = bits.iter().filter(|b| **b).count();
        ObservationMask {
            rows,
            cols,
            bits,
            observed,
        }
    }

    /// Interprets nonzero entries of a 0/1 matrix as observed.
    pub fn from_matrix(m: &DenseMatrix) -> Result<ObservationMask> {
        if let Some(v) = m.as_slice().iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::Validation(format!(
                "observation mask entries must be 0 or 1, found {v}"
            )));
        }
        Ok(Self::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) != 0.0))
    }

    /// Each entry observed independently with probability `fraction`.
    pub fn random(rows: usize, cols: usize, fraction: f64, seed: RngSeed) -> ObservationMask {
        let mut rng = seed.rng();
        Self::from_fn(rows, cols, |_, _| rng.random::<f64>() < fraction)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn observed_count(&self) -> usize {
        self.observed
    }

    pub fn is_full(&self) -> bool {
        self.observed == self.rows * self.cols
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> ObservationMask {
        Self::from_fn(self.cols, self.rows, |i, j| self.is_observed(j, i))
    }

    /// Rows with no observed entry.
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .filter(|i| !self.row(*i).iter().any(|b| *b))
            .collect()
    }

    /// Columns with no observed entry.
    pub fn empty_cols(&self) -> Vec<usize> {
        (0..self.cols)
            .filter(|j| !(0..self.rows).any(|i| self.is_observed(i, *j)))
            .collect()
    }

    pub fn to_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| {
            if self.is_observed(i, j) {
                1.0
            } else {
                0.0
            }
        })
    }

    pub(crate) fn check_shape(&self, x: &DenseMatrix) -> Result<()> {
        if self.shape() != x.shape() {
            return Err(Error::dims(format!(
                "mask {}x{} does not match data {}x{}",
                self.rows,
                self.cols,
                x.rows(),
                x.cols()
            )));
        }
        Ok(())
    }

    /// Copy of `x` with unobserved entries set to zero; unobserved values are never read.
    pub fn zero_fill(&self, x: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| {
            if self.is_observed(i, j) {
                x.get(i, j)
            } else {
                0.0
            }
        })
    }
}
