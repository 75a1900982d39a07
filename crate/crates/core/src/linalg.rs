//! Dense decompositions on small and medium matrices, backed by nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Thin SVD `A = U·diag(σ)·Vᵀ` with `σ` sorted nonincreasing.
pub struct ThinSvd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

pub fn thin_svd(a: &DenseMatrix) -> Result<ThinSvd> {
    let m = a.to_nalgebra();
    let svd = nalgebra::SVD::try_new(m, true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::NonFinite("SVD did not converge".into()))?;
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = DenseMatrix::from_fn(u.nrows(), k, |i, j| u[(i, order[j])]);
    let v = DenseMatrix::from_fn(vt.ncols(), k, |i, j| vt[(order[j], i)]);
    Ok(ThinSvd { u, sigma, v })
}

/// Orthogonal `R` minimizing `‖B − W·R‖_F`: `R = C·Dᵀ` where `WᵀB = C·Σ·Dᵀ`.
///
/// Also returns the smallest singular value of `WᵀB` so callers can flag rank deficiency.
pub fn procrustes_rotation(w: &DenseMatrix, b: &DenseMatrix) -> Result<(DenseMatrix, f64)> {
    let cross = w.t_matmul(b);
    let s = thin_svd(&cross)?;
    let min_sigma = s.sigma.last().copied().unwrap_or(0.0);
    Ok((s.u.matmul_t(&s.v), min_sigma))
}

/// Nearest orthogonal matrix (orthogonal polar factor).
pub fn orthogonal_polar_factor(r: &DenseMatrix) -> Result<DenseMatrix> {
    let s = thin_svd(r)?;
    Ok(s.u.matmul_t(&s.v))
}

/// `‖RᵀR − I‖_F²`.
pub fn orthogonality_residual(r: &DenseMatrix) -> f64 {
    let g = r.gram();
    let n = g.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = g.get(i, j) - if i == j { 1.0 } else { 0.0 };
            acc += d * d;
        }
    }
    acc
}

/// Solves `Y·G = F` for `Y` with symmetric positive (semi)definite `G` (row-wise normal equations).
///
/// A ridge of `1e−10·trace(G)` is added when the Cholesky factorization fails; the returned
/// flag reports whether that happened.
pub fn solve_gram_right(g: &DenseMatrix, f: &DenseMatrix) -> (DenseMatrix, bool) {
    let gm = g.to_nalgebra();
    let rhs = f.to_nalgebra().transpose();
    if let Some(ch) = gm.clone().cholesky() {
        let y = ch.solve(&rhs);
        if y.iter().all(|v| v.is_finite()) {
            return (DenseMatrix::from_nalgebra(&y.transpose()), false);
        }
    }
    let tr: f64 = (0..g.rows()).map(|i| g.get(i, i)).sum();
    let ridge = 1e-10 * tr.max(f64::MIN_POSITIVE);
    let mut reg = gm;
    for i in 0..reg.nrows() {
        reg[(i, i)] += ridge;
    }
    let y = match reg.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => pinv_nalgebra(&reg) * rhs,
    };
    (DenseMatrix::from_nalgebra(&y.transpose()), true)
}

/// Cholesky factor of a symmetric positive definite matrix, reusable across solves.
pub struct SpdSolver {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl SpdSolver {
    pub fn new(g: &DenseMatrix) -> Option<SpdSolver> {
        g.to_nalgebra().cholesky().map(|chol| SpdSolver { chol })
    }

    /// Solves `Y·G = F`.
    pub fn solve_right(&self, f: &DenseMatrix) -> DenseMatrix {
        let y = self.chol.solve(&f.to_nalgebra().transpose());
        DenseMatrix::from_nalgebra(&y.transpose())
    }
}

fn pinv_nalgebra(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let tol = svd.singular_values.max() * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    svd.pseudo_inverse(tol).unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

/// Moore–Penrose pseudo-inverse.
pub fn pseudo_inverse(a: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_nalgebra(&pinv_nalgebra(&a.to_nalgebra()))
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted nonincreasing.
pub fn symmetric_eigen(a: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let e = SymmetricEigen::new(a.to_nalgebra());
    let n = e.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        e.eigenvalues[j]
            .partial_cmp(&e.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = DenseMatrix::from_fn(n, n, |i, j| e.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

/// Orthonormal basis of the column space of `a` (thin QR).
pub fn orthonormal_columns(a: &DenseMatrix) -> DenseMatrix {
    let qr = a.to_nalgebra().qr();
    DenseMatrix::from_nalgebra(&qr.q())
}

/// Real roots of `c[0] + c[1]·x + … + c[d]·x^d` from the companion-matrix eigenvalues.
///
/// Roots whose imaginary part is below `imag_tol·(1 + |re|)` count as real.
pub fn real_polynomial_roots(coeffs: &[f64], imag_tol: f64) -> Vec<f64> {
    let mut c = coeffs.to_vec();
    while c.len() > 1 && c.last().map_or(false, |v| *v == 0.0) {
        c.pop();
    }
    let deg = c.len().saturating_sub(1);
    if deg == 0 {
        return Vec::new();
    }
    let lead = c[deg];
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i] / lead;
    }
    let eig = comp.complex_eigenvalues();
    let mut roots: Vec<f64> = eig
        .iter()
        .filter(|z| z.im.abs() <= imag_tol * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .collect();
    // one Newton polish step per root
    for r in roots.iter_mut() {
        let (mut p, mut dp) = (0.0, 0.0);
        for k in (0..=deg).rev() {
            dp = dp * *r + p;
            p = p * *r + c[k];
        }
        if dp != 0.0 {
            let next = *r - p / dp;
            if next.is_finite() {
                *r = next;
            }
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    roots
}
