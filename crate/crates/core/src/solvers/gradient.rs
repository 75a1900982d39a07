use crate::error::Result;
use crate::matrix::{dot, DenseMatrix, FactorPair};

use super::runner::Stepper;

const ARMIJO_SIGMA: f64 = 0.01;
const MAX_BACKTRACKS: usize = 40;

/// How each block step chooses its trial step length before Armijo backtracking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepInit {
    /// Carry the last accepted step per block, doubling it after an immediate acceptance.
    Adaptive,
    /// Mean over rows of the exact row line-search step `‖g_i‖²/‖g_i·Bᵀ‖²`.
    RowAverage,
}

/// Alternating projected gradient on `U` then `V` with Armijo backtracking along the
/// projection arc.
pub struct ProjectedGradient {
    f: FactorPair,
    init: StepInit,
    alpha: [f64; 2],
    rejected: usize,
}

impl ProjectedGradient {
    pub fn new(start: FactorPair, init: StepInit) -> Self {
        ProjectedGradient {
            f: start,
            init,
            alpha: [0.0; 2],
            rejected: 0,
        }
    }
}

/// `½tr(A·G·Aᵀ) − ⟨A, YB⟩`, the block objective up to a constant.
fn block_objective(a: &DenseMatrix, yb: &DenseMatrix, g: &DenseMatrix) -> f64 {
    let ag = a.matmul(g);
    0.5 * dot(ag.as_slice(), a.as_slice()) - dot(a.as_slice(), yb.as_slice())
}

fn row_average_step(grad: &DenseMatrix, g: &DenseMatrix) -> f64 {
    let mut sum = 0.0;
    let mut count = 0;
    let gg = grad.matmul(g);
    for i in 0..grad.rows() {
        let num = dot(grad.row(i), grad.row(i));
        let den = dot(gg.row(i), grad.row(i));
        if num > 0.0 && den > 0.0 {
            sum += num / den;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// One Armijo-projected step on block `a`. Returns the accepted step (0 if none).
fn block_step(
    a: &mut DenseMatrix,
    yb: &DenseMatrix,
    g: &DenseMatrix,
    trial: f64,
    adaptive: bool,
) -> f64 {
    let grad = a.matmul(g).sub(yb);
    let base = block_objective(a, yb, g);
    let mut alpha = trial;
    let mut accepted: Option<(f64, DenseMatrix)> = None;
    for attempt in 0..MAX_BACKTRACKS {
        let cand = a.zip_map(&grad, |x, d| (x - alpha * d).max(0.0));
        let decrease = dot(grad.as_slice(), cand.sub(a).as_slice());
        let val = block_objective(&cand, yb, g);
        if val - base <= ARMIJO_SIGMA * decrease {
            if attempt == 0 && adaptive {
                // an immediately accepted step is tried once more at double length
                let bigger = a.zip_map(&grad, |x, d| (x - 2.0 * alpha * d).max(0.0));
                let dec2 = dot(grad.as_slice(), bigger.sub(a).as_slice());
                let val2 = block_objective(&bigger, yb, g);
                if val2 - base <= ARMIJO_SIGMA * dec2 && val2 < val {
                    accepted = Some((2.0 * alpha, bigger));
                    break;
                }
            }
            accepted = Some((alpha, cand));
            break;
        }
        alpha *= 0.5;
    }
    match accepted {
        Some((alpha, cand)) => {
            *a = cand;
            alpha
        }
        None => 0.0,
    }
}

impl Stepper for ProjectedGradient {
    fn step(&mut self, x: &DenseMatrix) -> Result<()> {
        for block in 0..2 {
            let (a, yb, g) = if block == 0 {
                let yb = x.matmul(&self.f.v);
                (&mut self.f.u, yb, self.f.v.gram())
            } else {
                let yb = x.t_matmul(&self.f.u);
                (&mut self.f.v, yb, self.f.u.gram())
            };
            let trial = match self.init {
                StepInit::Adaptive => {
                    if self.alpha[block] > 0.0 {
                        self.alpha[block]
                    } else {
                        let tr: f64 = (0..g.rows()).map(|k| g.get(k, k)).sum();
                        if tr > 0.0 {
                            1.0 / tr
                        } else {
                            continue;
                        }
                    }
                }
                StepInit::RowAverage => {
                    let grad = a.matmul(&g).sub(&yb);
                    let s = row_average_step(&grad, &g);
                    if s > 0.0 {
                        s
                    } else {
                        continue;
                    }
                }
            };
            let accepted = block_step(a, &yb, &g, trial, self.init == StepInit::Adaptive);
            if accepted > 0.0 {
                self.alpha[block] = accepted;
            } else {
                self.rejected += 1;
            }
        }
        Ok(())
    }

    fn factors(&self) -> &FactorPair {
        &self.f
    }

    fn warnings(&self) -> Vec<String> {
        if self.rejected > 0 {
            vec![format!("{} block steps found no Armijo point", self.rejected)]
        } else {
            Vec::new()
        }
    }
}
