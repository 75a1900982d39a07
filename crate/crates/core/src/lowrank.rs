//! Unconstrained low-rank optima: truncated SVD with balanced `Σ^{1/2}` scaling, a
//! randomized range-finder variant, and softImpute-style ALS for masked data.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_columns, thin_svd};
use crate::mask::ObservationMask;
use crate::matrix::{DenseMatrix, FactorPair};
use crate::metrics::{frobenius_objective, masked_objective};
use crate::rng::RngSeed;

/// Scaled singular factors `U⋆ = U·Σ^{1/2}`, `V⋆ = V·Σ^{1/2}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvdFactors {
    pub ustar: DenseMatrix,
    pub vstar: DenseMatrix,
    pub singular_values: Vec<f64>,
    /// `‖X − U⋆·V⋆ᵀ‖_F`.
    pub residual: f64,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn factors(&self) -> FactorPair {
        FactorPair {
            u: self.ustar.clone(),
            v: self.vstar.clone(),
        }
    }

    /// Unit-norm left singular vectors (columns of `U⋆·Σ^{−1/2}`).
    pub fn left_vectors(&self) -> DenseMatrix {
        self.ustar.scale_columns(&inv_sqrt(&self.singular_values))
    }

    /// Unit-norm right singular vectors.
    pub fn right_vectors(&self) -> DenseMatrix {
        self.vstar.scale_columns(&inv_sqrt(&self.singular_values))
    }
}

fn inv_sqrt(s: &[f64]) -> Vec<f64> {
    s.iter()
        .map(|v| if *v > 0.0 { 1.0 / v.sqrt() } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruncatedSvdConfig {
    /// Relative change of the leading singular values at which block iteration stops.
    pub tol: f64,
    /// Above this `min(n, m)` the block subspace iteration replaces the dense SVD.
    pub dense_limit: usize,
    pub max_block_iters: usize,
}

impl Default for TruncatedSvdConfig {
    fn default() -> Self {
        TruncatedSvdConfig {
            tol: 1e-10,
            dense_limit: 2000,
            max_block_iters: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomizedSvdConfig {
    pub oversampling: usize,
    pub power_iters: usize,
    pub seed: RngSeed,
}

impl Default for RandomizedSvdConfig {
    fn default() -> Self {
        RandomizedSvdConfig {
            oversampling: 10,
            power_iters: 2,
            seed: RngSeed(0),
        }
    }
}

fn check_rank(x: &DenseMatrix, r: usize) -> Result<()> {
    let lim = x.rows().min(x.cols());
    if r == 0 || r > lim {
        return Err(Error::invalid(format!(
            "rank {r} out of range 1..={lim} for {}x{} data",
            x.rows(),
            x.cols()
        )));
    }
    Ok(())
}

pub fn truncated_svd(x: &DenseMatrix, r: usize) -> Result<SvdFactors> {
    truncated_svd_with(x, r, &TruncatedSvdConfig::default())
}

/// Rank-`r` truncated SVD.
pub fn truncated_svd_with(
    x: &DenseMatrix,
    r: usize,
    cfg: &TruncatedSvdConfig,
) -> Result<SvdFactors> {
    check_rank(x, r)?;
    if x.rows().min(x.cols()) <= cfg.dense_limit {
        let s = thin_svd(x)?;
        return Ok(assemble(x, s.u, s.sigma, s.v, r));
    }
    block_subspace_svd(x, r, cfg)
}

/// Block subspace iteration with full reorthogonalization each step.
fn block_subspace_svd(x: &DenseMatrix, r: usize, cfg: &TruncatedSvdConfig) -> Result<SvdFactors> {
    let block = (r + 10).min(x.rows().min(x.cols()));
    let mut rng = RngSeed(0x5eed).rng();
    let omega = DenseMatrix::from_fn(x.cols(), block, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormal_columns(&x.matmul(&omega));
    let mut prev: Vec<f64> = vec![0.0; r];
    for _ in 0..cfg.max_block_iters {
        let z = orthonormal_columns(&x.t_matmul(&q));
        q = orthonormal_columns(&x.matmul(&z));
        let b = q.t_matmul(x);
        let s = thin_svd(&b)?;
        let top = &s.sigma[..r];
        let change = top
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs() / a.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        prev = top.to_vec();
        if change <= cfg.tol {
            break;
        }
    }
    let b = q.t_matmul(x);
    let s = thin_svd(&b)?;
    Ok(assemble(x, q.matmul(&s.u), s.sigma, s.v, r))
}

/// Randomized range-finder SVD with `power_iters` subspace iterations.
pub fn randomized_svd(x: &DenseMatrix, r: usize, cfg: &RandomizedSvdConfig) -> Result<SvdFactors> {
    check_rank(x, r)?;
    let l = r + cfg.oversampling;
    if l > x.rows().min(x.cols()) {
        return Err(Error::invalid(format!(
            "rank {r} + oversampling {} exceeds min dimension {}",
            cfg.oversampling,
            x.rows().min(x.cols())
        )));
    }
    let mut rng = cfg.seed.rng();
    let omega = DenseMatrix::from_fn(x.cols(), l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormal_columns(&x.matmul(&omega));
    for _ in 0..cfg.power_iters {
        let z = orthonormal_columns(&x.t_matmul(&q));
        q = orthonormal_columns(&x.matmul(&z));
    }
    let b = q.t_matmul(x);
    let s = thin_svd(&b)?;
    Ok(assemble(x, q.matmul(&s.u), s.sigma, s.v, r))
}

/// Keeps the leading `r` triplets, fixes signs, and applies the `Σ^{1/2}` split.
fn assemble(
    x: &DenseMatrix,
    u: DenseMatrix,
    sigma: Vec<f64>,
    v: DenseMatrix,
    r: usize,
) -> SvdFactors {
    let idx: Vec<usize> = (0..r).collect();
    let mut u = u.select_columns(&idx);
    let mut v = v.select_columns(&idx);
    let sigma: Vec<f64> = sigma[..r].iter().map(|s| s.max(0.0)).collect();
    for k in 0..r {
        // largest-magnitude entry of the left vector made positive; first index wins ties
        let mut best = 0usize;
        for i in 0..u.rows() {
            if u.get(i, k).abs() > u.get(best, k).abs() {
                best = i;
            }
        }
        if u.get(best, k) < 0.0 {
            for i in 0..u.rows() {
                u.set(i, k, -u.get(i, k));
            }
            for i in 0..v.rows() {
                v.set(i, k, -v.get(i, k));
            }
        }
    }
    let half: Vec<f64> = sigma.iter().map(|s| s.sqrt()).collect();
    let ustar = u.scale_columns(&half);
    let vstar = v.scale_columns(&half);
    let f = FactorPair {
        u: ustar,
        v: vstar,
    };
    let residual = frobenius_objective(x, &f).unwrap_or(f64::NAN);
    SvdFactors {
        ustar: f.u,
        vstar: f.v,
        singular_values: sigma,
        residual,
    }
}

#[derive(Debug, Clone)]
pub struct SoftImputeResult {
    pub factors: FactorPair,
    pub iterations: usize,
    /// Masked objective after initialization and after every ALS sweep.
    pub objective_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Alternating least squares on the observed entries (softImpute-ALS with zero shrinkage).
///
/// Initialized from the rank-`r` SVD of the rescaled zero-filled data. Rows or columns without
/// observations keep their initial factor rows and are reported in `warnings`.
pub fn soft_impute_als(
    x: &DenseMatrix,
    mask: &ObservationMask,
    r: usize,
    max_iter: usize,
    tol: f64,
) -> Result<SoftImputeResult> {
    check_rank(x, r)?;
    mask.check_shape(x)?;
    let mut warnings = Vec::new();
    let empty_rows = mask.empty_rows();
    let empty_cols = mask.empty_cols();
    if !empty_rows.is_empty() {
        warnings.push(format!(
            "{} data rows have no observed entries; their U rows stay at initialization",
            empty_rows.len()
        ));
    }
    if !empty_cols.is_empty() {
        warnings.push(format!(
            "{} data columns have no observed entries; their V rows stay at initialization",
            empty_cols.len()
        ));
    }
    if mask.observed_count() == 0 {
        return Err(Error::Validation("observation mask is empty".into()));
    }

    let filled = mask.zero_fill(x);
    let scale = (x.rows() * x.cols()) as f64 / mask.observed_count() as f64;
    let init = truncated_svd(&filled.scale(scale), r)?;
    let mut f = init.factors();
    let mut objective = masked_objective(x, &f, mask)?;
    let mut trace = vec![objective];
    let mask_t = mask.transpose();
    let xt = x.transpose();
    let mut iterations = 0;
    let mut singular_rows = 0usize;

    while iterations < max_iter && objective > 0.0 {
        singular_rows += als_half_step(&xt, &mask_t, &f.u, &mut f.v);
        singular_rows += als_half_step(x, mask, &f.v, &mut f.u);
        iterations += 1;
        let next = masked_objective(x, &f, mask)?;
        if !next.is_finite() {
            return Err(Error::NonFinite("softImpute-ALS objective".into()));
        }
        trace.push(next);
        let improvement = (objective - next) / objective;
        objective = next;
        if improvement < tol {
            break;
        }
    }
    if singular_rows > 0 {
        warnings.push(format!(
            "{singular_rows} row solves used a pseudo-inverse (fewer than r observations)"
        ));
    }
    Ok(SoftImputeResult {
        factors: f,
        iterations,
        objective_trace: trace,
        warnings,
    })
}

/// Least-squares refit of each row of `target` against `fixed` over the observed entries of
/// the corresponding row of `x`. Returns how many rows needed the pseudo-inverse.
fn als_half_step(
    x: &DenseMatrix,
    mask: &ObservationMask,
    fixed: &DenseMatrix,
    target: &mut DenseMatrix,
) -> usize {
    let r = fixed.cols();
    let mut fallback = 0;
    for i in 0..x.rows() {
        let obs = mask.row(i);
        if !obs.iter().any(|b| *b) {
            continue;
        }
        let mut g = nalgebra::DMatrix::<f64>::zeros(r, r);
        let mut b = nalgebra::DVector::<f64>::zeros(r);
        let xrow = x.row(i);
        for (j, seen) in obs.iter().enumerate() {
            if !seen {
                continue;
            }
            let w = fixed.row(j);
            for a in 0..r {
                b[a] += xrow[j] * w[a];
                for c in a..r {
                    g[(a, c)] += w[a] * w[c];
                }
            }
        }
        for a in 0..r {
            for c in 0..a {
                g[(a, c)] = g[(c, a)];
            }
        }
        let sol = match g.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => {
                fallback += 1;
                let svd = g.svd(true, true);
                let tol = svd.singular_values.max() * r as f64 * f64::EPSILON;
                svd.solve(&b, tol).unwrap_or_else(|_| b.clone() * 0.0)
            }
        };
        if sol.iter().all(|v| v.is_finite()) {
            target.row_mut(i).copy_from_slice(sol.as_slice());
        }
    }
    fallback
}

/// Rebalances a factor pair to the `Σ^{1/2}` split of its product without changing `U·Vᵀ`.
pub fn balance(f: &FactorPair) -> Result<FactorPair> {
    let qu = f.u.to_nalgebra().qr();
    let qv = f.v.to_nalgebra().qr();
    let ru = DenseMatrix::from_nalgebra(&qu.r());
    let rv = DenseMatrix::from_nalgebra(&qv.r());
    let core = ru.matmul_t(&rv);
    let s = thin_svd(&core)?;
    let half: Vec<f64> = s.sigma.iter().map(|v| v.max(0.0).sqrt()).collect();
    let u = DenseMatrix::from_nalgebra(&qu.q()).matmul(&s.u.scale_columns(&half));
    let v = DenseMatrix::from_nalgebra(&qv.q()).matmul(&s.v.scale_columns(&half));
    Ok(FactorPair { u, v })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_svd() {
        let x = DenseMatrix::from_diagonal(&[3.0, 2.0, 1.0]);
        let s = truncated_svd(&x, 2).unwrap();
        assert!((s.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((s.singular_values[1] - 2.0).abs() < 1e-12);
        assert!((s.residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_out_of_range() {
        let x = DenseMatrix::zeros(3, 4);
        assert!(truncated_svd(&x, 0).is_err());
        assert!(truncated_svd(&x, 4).is_err());
        let cfg = RandomizedSvdConfig::default();
        assert!(randomized_svd(&DenseMatrix::identity(5), 2, &cfg).is_err());
    }

    #[test]
    fn sign_convention_makes_largest_left_entry_positive() {
        let x = DenseMatrix::from_fn(6, 5, |i, j| ((i * 5 + j * 3) % 7) as f64 - 3.0);
        let s = truncated_svd(&x, 3).unwrap();
        for k in 0..3 {
            let col = s.ustar.col(k);
            let big = col
                .iter()
                .copied()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn balance_preserves_product() {
        let u = DenseMatrix::from_fn(6, 2, |i, j| (i + 1) as f64 * (j + 2) as f64 * 0.1);
        let v = DenseMatrix::from_fn(4, 2, |i, j| (i as f64 - j as f64).sin() * 3.0);
        let f = FactorPair::new(u, v).unwrap();
        let b = balance(&f).unwrap();
        assert!(b.product().sub(&f.product()).frobenius_norm() < 1e-12);
        let nu = b.u.column_norms();
        let nv = b.v.column_norms();
        for k in 0..2 {
            assert!((nu[k] - nv[k]).abs() < 1e-10 * nu[k].max(1.0));
        }
        assert!(crate::matrix::dot(&b.u.col(0), &b.u.col(1)).abs() < 1e-10);
    }
}
