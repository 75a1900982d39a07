//! Exterior penalty stage: lift negative entries, then projected block coordinate descent
//! (PBCD) on the remaining entries with closed-form row step sizes, until both factors are
//! nonnegative.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{ObservationMask, SignMask};
use crate::matrix::{dot, DenseMatrix, FactorPair};
use crate::metrics::masked_objective;
use crate::trace::ConvergenceTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Exact minimizer of the row objective along the projected gradient.
    Optimal,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    /// Penalty weight on negative entries of `U`; `None` uses 10× the mean absolute entry of
    /// the rotated factors.
    pub delta_u: Option<f64>,
    pub delta_v: Option<f64>,
    pub rho_u: f64,
    pub rho_v: f64,
    pub pbcd_eps: f64,
    pub pbcd_max_iter: usize,
    pub step_mode: StepMode,
    /// Outer lift + PBCD sweeps before falling back to projection.
    pub max_sweeps: usize,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            delta_u: None,
            delta_v: None,
            rho_u: 0.01,
            rho_v: 0.01,
            pbcd_eps: 0.01,
            pbcd_max_iter: 50,
            step_mode: StepMode::Optimal,
            max_sweeps: 10_000,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        for (name, v) in [("delta_u", self.delta_u), ("delta_v", self.delta_v)] {
            if let Some(v) = v {
                if !positive(v) {
                    return Err(Error::invalid(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if !positive(self.rho_u) || !positive(self.rho_v) || !positive(self.pbcd_eps) {
            return Err(Error::invalid("rho_u, rho_v and pbcd_eps must be positive"));
        }
        if let StepMode::Fixed(s) = self.step_mode {
            if !positive(s) {
                return Err(Error::invalid(format!("fixed step must be positive, got {s}")));
            }
        }
        if self.pbcd_max_iter == 0 || self.max_sweeps == 0 {
            return Err(Error::invalid("pbcd_max_iter and max_sweeps must be at least 1"));
        }
        Ok(())
    }
}

/// Adds `rho·delta` to every strictly negative entry.
pub fn lift_negatives(m: &DenseMatrix, rho: f64, delta: f64) -> DenseMatrix {
    let lift = rho * delta;
    m.map(|v| if v < 0.0 { v + lift } else { v })
}

/// `‖g‖² / ‖g·Vᵀ‖²`: the exact line-search step for a row of `U` along `−g`.
///
/// Returns 0 when `g·Vᵀ` vanishes (the row is stationary on its free set).
pub fn optimal_row_step(grad_row: &[f64], v: &DenseMatrix) -> f64 {
    let num = dot(grad_row, grad_row);
    if num == 0.0 {
        return 0.0;
    }
    let mut den = 0.0;
    for j in 0..v.rows() {
        let a = dot(grad_row, v.row(j));
        den += a * a;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PbcdStats {
    pub iterations: usize,
    pub initial_projected_grad: f64,
    pub final_projected_grad: f64,
    /// Rows whose step denominator vanished.
    pub degenerate_steps: usize,
    /// Row updates whose projected step had to be shortened to avoid an increase.
    pub backtracked_steps: usize,
}

/// Row-separable least-squares geometry for `min ½‖M_E ∘ (X − U·Vᵀ)‖²` over `U`.
enum RowModel<'a> {
    Full {
        gram: DenseMatrix,
        xv: DenseMatrix,
    },
    Masked {
        x: &'a DenseMatrix,
        v: &'a DenseMatrix,
        mask: &'a ObservationMask,
    },
}

impl RowModel<'_> {
    fn gradient(&self, i: usize, u: &[f64], out: &mut [f64]) {
        match self {
            RowModel::Full { gram, xv } => {
                let xvi = xv.row(i);
                for (k, o) in out.iter_mut().enumerate() {
                    *o = dot(u, gram.row(k)) - xvi[k];
                }
            }
            RowModel::Masked { x, v, mask } => {
                out.fill(0.0);
                let obs = mask.row(i);
                let xi = x.row(i);
                for j in 0..v.rows() {
                    if obs[j] {
                        let vj = v.row(j);
                        let r = dot(u, vj) - xi[j];
                        crate::matrix::axpy(r, vj, out);
                    }
                }
            }
        }
    }

    /// Row objective up to a constant that does not depend on `u`.
    fn objective(&self, i: usize, u: &[f64]) -> f64 {
        match self {
            RowModel::Full { gram, xv } => {
                let mut quad = 0.0;
                for k in 0..u.len() {
                    quad += u[k] * dot(u, gram.row(k));
                }
                0.5 * quad - dot(u, xv.row(i))
            }
            RowModel::Masked { x, v, mask } => {
                let obs = mask.row(i);
                let xi = x.row(i);
                let mut s = 0.0;
                for j in 0..v.rows() {
                    if obs[j] {
                        let r = dot(u, v.row(j)) - xi[j];
                        s += r * r;
                    }
                }
                0.5 * s
            }
        }
    }

    /// `‖p·Vᵀ‖²` over observed entries.
    fn curvature(&self, i: usize, p: &[f64]) -> f64 {
        match self {
            RowModel::Full { gram, .. } => {
                let mut s = 0.0;
                for k in 0..p.len() {
                    s += p[k] * dot(p, gram.row(k));
                }
                s
            }
            RowModel::Masked { v, mask, .. } => {
                let obs = mask.row(i);
                let mut s = 0.0;
                for j in 0..v.rows() {
                    if obs[j] {
                        let a = dot(p, v.row(j));
                        s += a * a;
                    }
                }
                s
            }
        }
    }
}

/// Projected gradient restricted to the free set: zero off the mask and on entries pinned at
/// zero whose gradient points out of the orthant.
fn project_row(grad: &[f64], u: &[f64], free: &[bool], out: &mut [f64]) {
    for k in 0..grad.len() {
        out[k] = if !free[k] || (u[k] <= 0.0 && grad[k] > 0.0) {
            0.0
        } else {
            grad[k]
        };
    }
}

/// Projected block coordinate descent on the rows of `U` for `½‖M_E ∘ (X − U·Vᵀ)‖²`.
///
/// Only entries marked free in `free` move; each row takes the step
/// `U_i ← (U_i − d_i·p_i)₊` with `p_i` its projected gradient and `d_i` from [`StepMode`].
/// Stops when the projected-gradient norm falls below `eps` times its initial value or after
/// `max_iter` sweeps. To transpose the problem (update `V`), pass `Xᵀ`, `V`, `U` and `M_Eᵀ`.
#[allow(clippy::too_many_arguments)]
pub fn pbcd(
    x: &DenseMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    eps: f64,
    max_iter: usize,
    step_mode: StepMode,
    free: &SignMask,
    observed: &ObservationMask,
) -> Result<(DenseMatrix, PbcdStats)> {
    let (n, m) = x.shape();
    let r = u.cols();
    if u.rows() != n || v.rows() != m || v.cols() != r {
        return Err(Error::dims(format!(
            "pbcd: X {n}×{m}, U {:?}, V {:?}",
            u.shape(),
            v.shape()
        )));
    }
    if free.shape() != u.shape() {
        return Err(Error::dims("pbcd: sign mask shape differs from U"));
    }
    observed.check_shape(x)?;

    let model = if observed.is_full() {
        RowModel::Full {
            gram: v.gram(),
            xv: x.matmul(v),
        }
    } else {
        RowModel::Masked { x, v, mask: observed }
    };

    let mut u = u.clone();
    let mut stats = PbcdStats::default();
    let mut grads = DenseMatrix::zeros(n, r);
    let mut proj = DenseMatrix::zeros(n, r);
    let mut candidate = vec![0.0; r];

    loop {
        for i in 0..n {
            model.gradient(i, u.row(i), grads.row_mut(i));
            project_row(grads.row(i), u.row(i), free.row(i), proj.row_mut(i));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite(format!(
                "pbcd gradient at iteration {}",
                stats.iterations
            )));
        }
        let norm = proj.frobenius_norm();
        if stats.iterations == 0 {
            stats.initial_projected_grad = norm;
            stats.final_projected_grad = norm;
            if norm == 0.0 {
                break;
            }
        } else {
            stats.final_projected_grad = norm;
            if norm < eps * stats.initial_projected_grad {
                break;
            }
        }
        if stats.iterations >= max_iter {
            break;
        }
        stats.iterations += 1;

        for i in 0..n {
            let p = proj.row(i);
            let pn = dot(p, p);
            if pn == 0.0 {
                continue;
            }
            let mut d = match step_mode {
                StepMode::Optimal => {
                    let c = model.curvature(i, p);
                    if c > 0.0 {
                        pn / c
                    } else {
                        stats.degenerate_steps += 1;
                        continue;
                    }
                }
                StepMode::Fixed(s) => s,
            };
            let row = u.row(i).to_vec();
            let base = model.objective(i, &row);
            let fr = free.row(i);
            let mut accepted = false;
            for attempt in 0..40 {
                for k in 0..r {
                    candidate[k] = if fr[k] {
                        (row[k] - d * p[k]).max(0.0)
                    } else {
                        row[k]
                    };
                }
                let val = model.objective(i, &candidate);
                if val <= base + 1e-15 * base.abs() {
                    accepted = true;
                    if attempt > 0 {
                        stats.backtracked_steps += 1;
                    }
                    break;
                }
                d *= 0.5;
            }
            if accepted {
                u.row_mut(i).copy_from_slice(&candidate);
            }
        }
    }
    Ok((u, stats))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AscentStats {
    /// Outer lift + PBCD sweeps (each updates `U` then `V`).
    pub sweeps: usize,
    pub pbcd_iterations: usize,
    pub wall_time_s: f64,
    /// Objective (masked when a mask is given) at the returned point.
    pub objective: f64,
    pub delta_u: f64,
    pub delta_v: f64,
    /// The sweep cap was hit and the factors were projected onto the orthant instead.
    pub fallback_projection: bool,
    pub degenerate_steps: usize,
    pub backtracked_steps: usize,
    /// Objective after each outer sweep.
    pub trace: ConvergenceTrace,
}

#[derive(Debug, Clone)]
pub struct FeasibilityResult {
    pub factors: FactorPair,
    pub stats: AscentStats,
}

/// Drives an exterior point into the nonnegative orthant.
///
/// Each outer sweep lifts the negative entries of `U`, recomputes its sign mask and runs PBCD
/// on the nonnegative entries, then does the same for `V`; sweeps repeat until both factors
/// are nonnegative.
pub fn attain_feasibility(
    x: &DenseMatrix,
    f: &FactorPair,
    cfg: &PenaltyConfig,
    observed: Option<&ObservationMask>,
) -> Result<FeasibilityResult> {
    cfg.validate()?;
    f.check_against(x)?;
    let start = Instant::now();
    let full;
    let observed = match observed {
        Some(m) => {
            m.check_shape(x)?;
            m
        }
        None => {
            full = ObservationMask::full(x.rows(), x.cols());
            &full
        }
    };

    let scale = 10.0 * f.stacked().mean_abs();
    let auto = if scale > 0.0 { scale } else { 1.0 };
    let delta_u = cfg.delta_u.unwrap_or(auto);
    let delta_v = cfg.delta_v.unwrap_or(auto);

    let mut u = f.u.clone();
    let mut v = f.v.clone();
    let mut trace = ConvergenceTrace::new();
    let mut sweeps = 0;
    let mut pbcd_iterations = 0;
    let mut degenerate_steps = 0;
    let mut backtracked_steps = 0;

    let xt;
    let mt;
    if !(u.is_nonnegative() && v.is_nonnegative()) {
        xt = x.transpose();
        mt = observed.transpose();
        while sweeps < cfg.max_sweeps {
            sweeps += 1;
            u = lift_negatives(&u, cfg.rho_u, delta_u);
            let mask = SignMask::of(&u);
            let (nu, s) = pbcd(
                x,
                &u,
                &v,
                cfg.pbcd_eps,
                cfg.pbcd_max_iter,
                cfg.step_mode,
                &mask,
                observed,
            )?;
            u = nu;
            pbcd_iterations += s.iterations;
            degenerate_steps += s.degenerate_steps;
            backtracked_steps += s.backtracked_steps;

            v = lift_negatives(&v, cfg.rho_v, delta_v);
            let mask = SignMask::of(&v);
            let (nv, s) = pbcd(
                &xt,
                &v,
                &u,
                cfg.pbcd_eps,
                cfg.pbcd_max_iter,
                cfg.step_mode,
                &mask,
                &mt,
            )?;
            v = nv;
            pbcd_iterations += s.iterations;
            degenerate_steps += s.degenerate_steps;
            backtracked_steps += s.backtracked_steps;

            let current = FactorPair {
                u: u.clone(),
                v: v.clone(),
            };
            trace.push(
                start.elapsed().as_secs_f64(),
                masked_objective(x, &current, observed)?,
                sweeps,
            );
            if u.is_nonnegative() && v.is_nonnegative() {
                break;
            }
        }
    }

    let mut fallback_projection = false;
    if !(u.is_nonnegative() && v.is_nonnegative()) {
        fallback_projection = true;
        u = u.positive_part();
        v = v.positive_part();
    }
    let factors = FactorPair { u, v };
    let objective = masked_objective(x, &factors, observed)?;
    Ok(FeasibilityResult {
        factors,
        stats: AscentStats {
            sweeps,
            pbcd_iterations,
            wall_time_s: start.elapsed().as_secs_f64(),
            objective,
            delta_u,
            delta_v,
            fallback_projection,
            degenerate_steps,
            backtracked_steps,
            trace,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::frobenius_objective;

    #[test]
    fn lift_changes_only_negatives() {
        let m = DenseMatrix::from_rows(&[&[-0.3, 0.0], &[2.0, -1.0]]);
        let l = lift_negatives(&m, 0.01, 10.0);
        assert!((l.get(0, 0) + 0.2).abs() < 1e-15);
        assert_eq!(l.get(0, 1), 0.0);
        assert_eq!(l.get(1, 0), 2.0);
        assert!((l.get(1, 1) + 0.9).abs() < 1e-15);
    }

    #[test]
    fn step_for_scaled_orthonormal_rows() {
        // rows of V orthonormal scaled by c: ‖gVᵀ‖² = c²‖g‖²
        let c = 3.0;
        let v = DenseMatrix::from_fn(4, 4, |i, j| if i == j { c } else { 0.0 });
        let g = [0.3, -1.0, 2.0, 0.5];
        assert!((optimal_row_step(&g, &v) - 1.0 / (c * c)).abs() < 1e-15);
        assert_eq!(optimal_row_step(&[0.0; 4], &v), 0.0);
    }

    #[test]
    fn stationary_rows_are_untouched() {
        let u = DenseMatrix::from_fn(5, 2, |i, j| (i + 2 * j + 1) as f64);
        let v = DenseMatrix::from_fn(4, 2, |i, j| (i * j + 1) as f64);
        let x = u.matmul_t(&v);
        let mask = SignMask::of(&u);
        let (out, stats) = pbcd(
            &x,
            &u,
            &v,
            0.01,
            50,
            StepMode::Optimal,
            &mask,
            &ObservationMask::full(5, 4),
        )
        .unwrap();
        assert_eq!(out, u);
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn already_feasible_pair_is_returned() {
        let u = DenseMatrix::from_fn(4, 2, |i, j| (i + j) as f64);
        let v = DenseMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64 * 0.5);
        let x = DenseMatrix::from_fn(4, 3, |i, j| (i * j) as f64);
        let f = FactorPair { u, v };
        let res = attain_feasibility(&x, &f, &PenaltyConfig::default(), None).unwrap();
        assert_eq!(res.stats.sweeps, 0);
        assert_eq!(res.factors, f);
        assert_eq!(res.stats.objective, frobenius_objective(&x, &f).unwrap());
    }

    #[test]
    fn negative_entries_outside_the_mask_are_bit_identical() {
        let u = DenseMatrix::from_rows(&[&[1.0, -0.5], &[-2.0, 3.0], &[0.5, 0.25]]);
        let v = DenseMatrix::from_rows(&[&[1.0, 0.5], &[0.2, 1.0]]);
        let x = DenseMatrix::from_fn(3, 2, |i, j| (i + j + 1) as f64);
        let mask = SignMask::of(&u);
        let (out, _) = pbcd(
            &x,
            &u,
            &v,
            1e-6,
            20,
            StepMode::Optimal,
            &mask,
            &ObservationMask::full(3, 2),
        )
        .unwrap();
        assert_eq!(out.get(0, 1).to_bits(), (-0.5f64).to_bits());
        assert_eq!(out.get(1, 0).to_bits(), (-2.0f64).to_bits());
        for (i, j) in [(0, 0), (1, 1), (2, 0), (2, 1)] {
            assert!(out.get(i, j) >= 0.0);
        }
    }
}
