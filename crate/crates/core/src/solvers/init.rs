use rand::Rng;

use crate::lowrank::SvdFactors;
use crate::matrix::{dot, DenseMatrix, FactorPair};
use crate::rng::RngSeed;

/// Factors with i.i.d. uniform(0, 1) entries.
pub fn random_init(n: usize, m: usize, r: usize, seed: RngSeed) -> FactorPair {
    let mut rng = seed.rng();
    let u = DenseMatrix::from_fn(n, r, |_, _| rng.random::<f64>());
    let v = DenseMatrix::from_fn(m, r, |_, _| rng.random::<f64>());
    FactorPair { u, v }
}

/// [`random_init`] with both factors scaled by a common factor so `‖U·Vᵀ‖_F = ‖X‖_F`.
pub fn random_init_for(x: &DenseMatrix, r: usize, seed: RngSeed) -> FactorPair {
    let mut f = random_init(x.rows(), x.cols(), r, seed);
    let p = f.product().frobenius_norm();
    let target = x.frobenius_norm();
    if p > 0.0 && target > 0.0 {
        let s = (target / p).sqrt();
        f.u = f.u.scale(s);
        f.v = f.v.scale(s);
    }
    f
}

fn split(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (
        x.iter().map(|v| v.max(0.0)).collect(),
        x.iter().map(|v| (-v).max(0.0)).collect(),
    )
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Nonnegative double SVD: each singular pair is replaced by the dominant of its
/// positive-part and negative-part rank-one components. Zeros are kept.
pub fn nndsvd_init(svd: &SvdFactors) -> FactorPair {
    let left = svd.left_vectors();
    let right = svd.right_vectors();
    let r = svd.rank();
    let mut u = DenseMatrix::zeros(left.rows(), r);
    let mut v = DenseMatrix::zeros(right.rows(), r);
    for k in 0..r {
        let sigma = svd.singular_values[k];
        let x = left.col(k);
        let y = right.col(k);
        let (ucol, vcol) = if k == 0 {
            let s = sigma.sqrt();
            (
                x.iter().map(|v| s * v.abs()).collect::<Vec<_>>(),
                y.iter().map(|v| s * v.abs()).collect::<Vec<_>>(),
            )
        } else {
            let (xp, xn) = split(&x);
            let (yp, yn) = split(&y);
            let (nxp, nyp, nxn, nyn) = (norm(&xp), norm(&yp), norm(&xn), norm(&yn));
            let (mp, mn) = (nxp * nyp, nxn * nyn);
            let (a, b, na, nb, mass) = if mp > mn {
                (xp, yp, nxp, nyp, mp)
            } else {
                (xn, yn, nxn, nyn, mn)
            };
            if mass > 0.0 {
                let s = (sigma * mass).sqrt();
                (
                    a.iter().map(|v| s * v / na).collect(),
                    b.iter().map(|v| s * v / nb).collect(),
                )
            } else {
                (vec![0.0; x.len()], vec![0.0; y.len()])
            }
        };
        u.set_col(k, &ucol);
        v.set_col(k, &vcol);
    }
    FactorPair { u, v }
}
