use crate::error::Result;
use crate::linalg::{solve_gram_right, SpdSolver};
use crate::matrix::{DenseMatrix, FactorPair};

use super::runner::Stepper;

/// Inner iterations per block and outer pass.
pub const AO_ADMM_INNER: usize = 5;

/// ADMM for the nonnegative least-squares block `min_{H ≥ 0} ½tr(H·G·Hᵀ) − ⟨H, F⟩`.
///
/// `h` and `dual` are warm starts and are updated in place; the penalty is `trace(G)/r`.
/// Returns whether the Cholesky factorization needed a ridge.
pub fn admm_nnls(
    g: &DenseMatrix,
    f: &DenseMatrix,
    h: &mut DenseMatrix,
    dual: &mut DenseMatrix,
    iters: usize,
) -> bool {
    let r = g.rows();
    let tr: f64 = (0..r).map(|k| g.get(k, k)).sum();
    let rho = if tr > 0.0 { tr / r as f64 } else { 1.0 };
    let mut shifted = g.clone();
    for k in 0..r {
        shifted.set(k, k, g.get(k, k) + rho);
    }
    let solver = SpdSolver::new(&shifted);
    let mut ridged = false;
    for _ in 0..iters {
        // H̃ = (F + ρ(H + D))·(G + ρI)⁻¹
        let rhs = f.add(&h.add(dual).scale(rho));
        let aux = match &solver {
            Some(s) => s.solve_right(&rhs),
            None => {
                ridged = true;
                solve_gram_right(&shifted, &rhs).0
            }
        };
        *h = aux.sub(dual).positive_part();
        dual.add_assign_scaled(&h.sub(&aux), 1.0);
    }
    ridged
}

/// Alternating optimization with ADMM-solved NNLS blocks and warm-started duals.
pub struct AoAdmm {
    f: FactorPair,
    dual_u: DenseMatrix,
    dual_v: DenseMatrix,
    inner: usize,
    ridged: usize,
}

impl AoAdmm {
    pub fn new(start: FactorPair, inner: usize) -> Self {
        AoAdmm {
            dual_u: DenseMatrix::zeros(start.u.rows(), start.rank()),
            dual_v: DenseMatrix::zeros(start.v.rows(), start.rank()),
            f: start,
            inner: inner.max(1),
            ridged: 0,
        }
    }
}

impl Stepper for AoAdmm {
    fn step(&mut self, x: &DenseMatrix) -> Result<()> {
        let g = self.f.v.gram();
        let fu = x.matmul(&self.f.v);
        self.ridged += admm_nnls(&g, &fu, &mut self.f.u, &mut self.dual_u, self.inner) as usize;
        let g = self.f.u.gram();
        let fv = x.t_matmul(&self.f.u);
        self.ridged += admm_nnls(&g, &fv, &mut self.f.v, &mut self.dual_v, self.inner) as usize;
        Ok(())
    }

    fn factors(&self) -> &FactorPair {
        &self.f
    }

    fn warnings(&self) -> Vec<String> {
        if self.ridged > 0 {
            vec![format!("{} Cholesky factorizations needed a ridge", self.ridged)]
        } else {
            Vec::new()
        }
    }
}

/// ADMM on the whole problem `min ½‖X − UVᵀ‖²` s.t. `U = Ũ`, `V = Ṽ`, `Ũ, Ṽ ≥ 0`.
///
/// Updates `U`, `V` by regularized least squares toward the nonnegative copies, projects to
/// get `Ũ`, `Ṽ`, then takes dual steps with relaxation `γ`. The nonnegative copies are the
/// reported factors.
pub struct NmfAdmm {
    u: DenseMatrix,
    v: DenseMatrix,
    reported: FactorPair,
    lambda: DenseMatrix,
    pi: DenseMatrix,
    alpha: f64,
    beta: f64,
    gamma: f64,
    ridged: usize,
}

impl NmfAdmm {
    /// `penalty = None` scales both penalties to `trace(UᵀU + VᵀV)/(2r)` of the start.
    pub fn new(start: FactorPair, penalty: Option<f64>, gamma: f64) -> Self {
        let r = start.rank();
        let auto = {
            let s = (start.u.frobenius_norm().powi(2) + start.v.frobenius_norm().powi(2))
                / (2.0 * r as f64);
            if s > 0.0 {
                s
            } else {
                1.0
            }
        };
        let p = penalty.unwrap_or(auto);
        NmfAdmm {
            u: start.u.clone(),
            v: start.v.clone(),
            lambda: DenseMatrix::zeros(start.u.rows(), r),
            pi: DenseMatrix::zeros(start.v.rows(), r),
            reported: start,
            alpha: p,
            beta: p,
            gamma,
            ridged: 0,
        }
    }
}

fn shifted_gram(a: &DenseMatrix, shift: f64) -> DenseMatrix {
    let mut g = a.gram();
    for k in 0..g.rows() {
        g.set(k, k, g.get(k, k) + shift);
    }
    g
}

impl Stepper for NmfAdmm {
    fn step(&mut self, x: &DenseMatrix) -> Result<()> {
        // U = (XV + αŨ − Λ)(VᵀV + αI)⁻¹
        let rhs = x
            .matmul(&self.v)
            .add(&self.reported.u.scale(self.alpha))
            .sub(&self.lambda);
        let (u, ridged) = solve_gram_right(&shifted_gram(&self.v, self.alpha), &rhs);
        self.ridged += ridged as usize;
        self.u = u;
        let rhs = x
            .t_matmul(&self.u)
            .add(&self.reported.v.scale(self.beta))
            .sub(&self.pi);
        let (v, ridged) = solve_gram_right(&shifted_gram(&self.u, self.beta), &rhs);
        self.ridged += ridged as usize;
        self.v = v;

        self.reported.u = self.u.add(&self.lambda.scale(1.0 / self.alpha)).positive_part();
        self.reported.v = self.v.add(&self.pi.scale(1.0 / self.beta)).positive_part();

        self.lambda
            .add_assign_scaled(&self.u.sub(&self.reported.u), self.gamma * self.alpha);
        self.pi
            .add_assign_scaled(&self.v.sub(&self.reported.v), self.gamma * self.beta);
        Ok(())
    }

    fn factors(&self) -> &FactorPair {
        &self.reported
    }

    fn warnings(&self) -> Vec<String> {
        if self.ridged > 0 {
            vec![format!("{} normal-equation solves needed a ridge", self.ridged)]
        } else {
            Vec::new()
        }
    }
}
