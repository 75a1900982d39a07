use crate::error::Result;
use crate::matrix::{dot, DenseMatrix, FactorPair};
use crate::metrics::residual;

use super::runner::Stepper;

/// Hierarchical alternating least squares: exact nonnegative column updates of `U`, then `V`.
///
/// With `inner > 1` each block gets several column sweeps against the same cached `X·V` and
/// `VᵀV` before switching, which approaches an exact block solve when columns are correlated.
pub struct Hals {
    f: FactorPair,
    inner: usize,
    rescues: usize,
}

impl Hals {
    pub fn new(start: FactorPair) -> Self {
        Hals::with_inner(start, 1)
    }

    pub fn with_inner(start: FactorPair, inner: usize) -> Self {
        Hals {
            f: start,
            inner: inner.max(1),
            rescues: 0,
        }
    }

    pub fn rescues(&self) -> usize {
        self.rescues
    }
}

/// One HALS pass over the columns of `a` with `b` fixed, for `½‖Y − a·bᵀ‖²` where
/// `yb = Y·b` and `gram = bᵀb`. Returns the indices of columns that became all zero.
pub(crate) fn hals_pass(a: &mut DenseMatrix, yb: &DenseMatrix, gram: &DenseMatrix) -> Vec<usize> {
    let (n, r) = a.shape();
    let mut zeroed = Vec::new();
    let mut col = vec![0.0; n];
    for k in 0..r {
        let gkk = gram.get(k, k);
        if gkk <= 0.0 {
            continue;
        }
        let gk = gram.row(k);
        let mut any = false;
        for i in 0..n {
            let row = a.row(i);
            // a_ik + (yb_ik − a_i·G_k) / G_kk
            let v = row[k] + (yb.get(i, k) - dot(row, gk)) / gkk;
            col[i] = if v > 0.0 { v } else { 0.0 };
            any |= col[i] > 0.0;
        }
        a.set_col(k, &col);
        if !any {
            zeroed.push(k);
        }
    }
    zeroed
}

fn sweeps(a: &mut DenseMatrix, yb: &DenseMatrix, gram: &DenseMatrix, inner: usize) -> Vec<usize> {
    for _ in 1..inner {
        let zeroed = hals_pass(a, yb, gram);
        if !zeroed.is_empty() {
            return zeroed;
        }
    }
    hals_pass(a, yb, gram)
}

/// Reseeds column `k` of `a` from the positive part of the data-residual column with the
/// largest norm (unit length) and zeroes the partner column, leaving the product unchanged.
/// `e` is the residual `Y − a·bᵀ` arranged so its columns live in `a`'s row space.
/// Columns already used as seeds in this pass are skipped.
fn rescue(
    a: &mut DenseMatrix,
    b: &mut DenseMatrix,
    k: usize,
    e: &DenseMatrix,
    used: &mut Vec<usize>,
) -> bool {
    let norms = e.column_norms();
    let Some((j, _)) = norms
        .iter()
        .enumerate()
        .filter(|(j, v)| **v > 0.0 && !used.contains(j))
        .max_by(|a, b| a.1.total_cmp(b.1))
    else {
        return false;
    };
    let mut seed: Vec<f64> = e.col(j).iter().map(|v| v.max(0.0)).collect();
    let norm = dot(&seed, &seed).sqrt();
    if norm == 0.0 {
        return false;
    }
    for s in &mut seed {
        *s /= norm;
    }
    used.push(j);
    a.set_col(k, &seed);
    b.set_col(k, &vec![0.0; b.rows()]);
    true
}

impl Stepper for Hals {
    fn step(&mut self, x: &DenseMatrix) -> Result<()> {
        let FactorPair { u, v } = &mut self.f;

        let xv = x.matmul(v);
        let g = v.gram();
        let zeroed = sweeps(u, &xv, &g, self.inner);
        if !zeroed.is_empty() {
            // residual X − UVᵀ; its columns are indexed like U's rows
            let e = residual(x, &FactorPair { u: u.clone(), v: v.clone() }).scale(-1.0);
            let mut used = Vec::new();
            for k in zeroed {
                self.rescues += rescue(u, v, k, &e, &mut used) as usize;
            }
        }

        let xtu = x.t_matmul(u);
        let g = u.gram();
        let zeroed = sweeps(v, &xtu, &g, self.inner);
        if !zeroed.is_empty() {
            let e = residual(x, &FactorPair { u: u.clone(), v: v.clone() })
                .scale(-1.0)
                .transpose();
            let mut used = Vec::new();
            for k in zeroed {
                if rescue(v, u, k, &e, &mut used) {
                    self.rescues += 1;
                    // refit the partner so the rescued direction is used this sweep
                    let xv = x.matmul(v);
                    let g = v.gram();
                    refit_column(u, &xv, &g, k);
                }
            }
        }
        Ok(())
    }

    fn factors(&self) -> &FactorPair {
        &self.f
    }

    fn warnings(&self) -> Vec<String> {
        if self.rescues > 0 {
            vec![format!("{} zero columns reseeded", self.rescues)]
        } else {
            Vec::new()
        }
    }
}

fn refit_column(a: &mut DenseMatrix, yb: &DenseMatrix, gram: &DenseMatrix, k: usize) {
    let gkk = gram.get(k, k);
    if gkk <= 0.0 {
        return;
    }
    let n = a.rows();
    let mut col = vec![0.0; n];
    for i in 0..n {
        let row = a.row(i);
        let v = row[k] + (yb.get(i, k) - dot(row, gram.row(k))) / gkk;
        col[i] = v.max(0.0);
    }
    a.set_col(k, &col);
}

