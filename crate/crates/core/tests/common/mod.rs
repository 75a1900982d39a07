//! Independent reference implementations used by the oracle and acceptance tests.
//!
//! Nothing here calls into the library's numerical kernels: every oracle is either brute
//! force or evaluated in double-double arithmetic.
#![allow(dead_code)]

use std::cmp::Ordering;

use enmf::{DenseMatrix, FactorPair};

/// Unevaluated sum `hi + lo` carrying roughly 106 bits.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub fn from(v: f64) -> Dd {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = two_sum(s, e);
        Dd { hi, lo }
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn cmp(self, o: Dd) -> Ordering {
        let d = self.sub(o);
        d.hi.total_cmp(&0.0).then(d.lo.total_cmp(&0.0))
    }
}

/// `‖X − UVᵀ‖_F` with every product and sum carried in double-double.
pub fn dd_frobenius(x: &DenseMatrix, f: &FactorPair) -> f64 {
    let (n, m) = (x.rows(), x.cols());
    let r = f.u.cols();
    let mut total = Dd::default();
    for i in 0..n {
        for j in 0..m {
            let mut e = Dd::from(x.get(i, j));
            for k in 0..r {
                e = e.sub(Dd::from(f.u.get(i, k)).mul(Dd::from(f.v.get(j, k))));
            }
            total = total.add(e.mul(e));
        }
    }
    total.to_f64().sqrt()
}

/// `½‖x − (u − d·g)·Vᵀ‖²` for one row, in double-double.
pub fn dd_row_objective(x: &[f64], u: &[f64], g: &[f64], v: &DenseMatrix, d: f64) -> Dd {
    let dd = Dd::from(d);
    let w: Vec<Dd> = u
        .iter()
        .zip(g)
        .map(|(&a, &b)| Dd::from(a).sub(dd.mul(Dd::from(b))))
        .collect();
    let mut total = Dd::default();
    for (j, &xj) in x.iter().enumerate() {
        let mut e = Dd::from(xj);
        for (k, wk) in w.iter().enumerate() {
            e = e.sub(wk.mul(Dd::from(v.get(j, k))));
        }
        total = total.add(e.mul(e));
    }
    total.mul(Dd::from(0.5))
}

/// Golden-section minimization of a unimodal `f` on `[a, b]`, to bracket width `tol`.
pub fn golden_section(f: impl Fn(f64) -> Dd, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..500 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc.cmp(fd) == Ordering::Less {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Minimizer of `f` over `[lo, hi]` by repeated grid refinement: `points` samples per
/// level, each level zooming onto two cells around the incumbent.
pub fn grid_minimize(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, points: usize, levels: usize) -> f64 {
    let mut best = lo;
    for _ in 0..levels {
        let h = (hi - lo) / (points - 1) as f64;
        let mut best_v = f64::INFINITY;
        for k in 0..points {
            let t = lo + h * k as f64;
            let v = f(t);
            if v < best_v {
                best_v = v;
                best = t;
            }
        }
        lo = (best - h).max(lo);
        hi = (best + h).min(hi);
    }
    best
}

/// Solves the square system `A·x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for i in c + 1..n {
            let f = a[i][c] / a[c][c];
            for j in c..n {
                a[i][j] -= f * a[c][j];
            }
            b[i] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// `argmin_{h ≥ 0} ½hᵀGh − fᵀh` for small positive definite `G`, by enumerating every
/// support set and keeping the best feasible stationary point.
pub fn nnls_brute_force(g: &[Vec<f64>], f: &[f64]) -> Vec<f64> {
    let r = f.len();
    let obj = |h: &[f64]| {
        let mut q = 0.0;
        for i in 0..r {
            for j in 0..r {
                q += 0.5 * h[i] * g[i][j] * h[j];
            }
            q -= f[i] * h[i];
        }
        q
    };
    let mut best = vec![0.0; r];
    let mut best_v = 0.0;
    for set in 1u32..(1 << r) {
        let idx: Vec<usize> = (0..r).filter(|k| set & (1 << k) != 0).collect();
        let a: Vec<Vec<f64>> = idx.iter().map(|&i| idx.iter().map(|&j| g[i][j]).collect()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| f[i]).collect();
        let Some(sol) = gauss_solve(a, b) else { continue };
        if sol.iter().any(|v| *v < 0.0) {
            continue;
        }
        let mut h = vec![0.0; r];
        for (&i, v) in idx.iter().zip(sol) {
            h[i] = v;
        }
        let v = obj(&h);
        if v < best_v {
            best_v = v;
            best = h;
        }
    }
    best
}

/// Best `‖B − W·R‖_F` over planar rotations and reflections sampled every 0.1°.
pub fn procrustes_angle_sweep(w: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let mut best = f64::INFINITY;
    for k in 0..3600 {
        let t = (k as f64 / 10.0).to_radians();
        let (s, c) = t.sin_cos();
        for refl in [1.0, -1.0] {
            let r = DenseMatrix::from_fn(2, 2, |i, j| match (i, j) {
                (0, 0) => c,
                (0, 1) => -s * refl,
                (1, 0) => s,
                _ => c * refl,
            });
            best = best.min(b.sub(&w.matmul(&r)).frobenius_norm());
        }
    }
    best
}

/// Singular values of `a` by one-sided Jacobi rotations, sorted nonincreasing.
pub fn jacobi_singular_values(a: &DenseMatrix) -> Vec<f64> {
    let (n, m) = (a.rows(), a.cols());
    let mut cols: Vec<Vec<f64>> = (0..m).map(|j| a.col(j)).collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..m {
            for q in p + 1..m {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let (x, y) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * x - s * y;
                    cols[q][i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// `sqrt(Σ_{observed} (x − uvᵀ)²)` summed entry by entry.
pub fn masked_objective_brute(x: &DenseMatrix, f: &FactorPair, observed: impl Fn(usize, usize) -> bool) -> f64 {
    let mut s = 0.0;
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            if observed(i, j) {
                let p: f64 = (0..f.u.cols()).map(|k| f.u.get(i, k) * f.v.get(j, k)).sum();
                s += (x.get(i, j) - p).powi(2);
            }
        }
    }
    s.sqrt()
}
