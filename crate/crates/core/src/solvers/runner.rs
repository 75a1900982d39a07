use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::KktResiduals;
use crate::error::{Error, Result};
use crate::mask::ObservationMask;
use crate::matrix::{DenseMatrix, FactorPair};
use crate::metrics::evaluate;
use crate::trace::ConvergenceTrace;

/// Why an iterative run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Wall-clock budget exhausted.
    Budget,
    /// Objective reached the error target.
    TargetReached,
    /// KKT residuals within tolerance.
    KktConverged,
    /// No relative improvement above 1e−12 for the configured number of iterations.
    Stagnated,
    IterationCap,
    /// The solver aborted; the record carries the last good iterate.
    Error,
}

impl Termination {
    pub fn label(self) -> &'static str {
        match self {
            Termination::Budget => "budget",
            Termination::TargetReached => "target_reached",
            Termination::KktConverged => "kkt_converged",
            Termination::Stagnated => "stagnated",
            Termination::IterationCap => "iteration_cap",
            Termination::Error => "error",
        }
    }
}

/// Stopping rules checked after every iteration; unset rules are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopCriteria {
    pub max_iters: Option<usize>,
    /// Seconds measured from the clock handed to the run (initialization included).
    pub time_budget_s: Option<f64>,
    /// Stop once the objective is at or below this value.
    pub error_target: Option<f64>,
    /// Stop once the KKT residuals are within this tolerance.
    pub kkt_tol: Option<f64>,
    /// Consecutive non-improving iterations that count as stagnation.
    pub stagnation_iters: Option<usize>,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria {
            max_iters: Some(1000),
            time_budget_s: None,
            error_target: None,
            kkt_tol: None,
            stagnation_iters: Some(STAGNATION_ITERS),
        }
    }
}

pub const STAGNATION_ITERS: usize = 1000;
const IMPROVEMENT_REL: f64 = 1e-12;

impl StopCriteria {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters.is_none() && self.time_budget_s.is_none() && self.error_target.is_none() {
            return Err(Error::invalid(
                "at least one of max_iters, time_budget_s, error_target must be set",
            ));
        }
        if let Some(t) = self.time_budget_s {
            if !(t >= 0.0) {
                return Err(Error::invalid(format!("time budget must be nonnegative, got {t}")));
            }
        }
        Ok(())
    }
}

/// One iteration of an NMF method.
pub trait Stepper {
    fn step(&mut self, x: &DenseMatrix) -> Result<()>;
    /// The factors the method currently reports.
    fn factors(&self) -> &FactorPair;
    fn warnings(&self) -> Vec<String> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub factors: FactorPair,
    pub trace: ConvergenceTrace,
    pub iterations: usize,
    pub termination: Termination,
    pub objective: f64,
    pub kkt: Option<KktResiduals>,
    pub warnings: Vec<String>,
}

/// Tracks the consecutive-non-improvement rule.
#[derive(Debug, Clone, Copy)]
pub struct StagnationTracker {
    best: f64,
    since: usize,
    window: usize,
}

impl StagnationTracker {
    pub fn new(initial: f64, window: usize) -> Self {
        StagnationTracker {
            best: initial,
            since: 0,
            window,
        }
    }

    /// Records an objective value; returns true once `window` consecutive values failed to
    /// improve on the best by more than 1e−12 relative.
    pub fn observe(&mut self, objective: f64) -> bool {
        if objective < self.best - IMPROVEMENT_REL * self.best.abs() {
            self.best = objective;
            self.since = 0;
        } else {
            self.since += 1;
        }
        self.since >= self.window
    }

    pub fn since_improvement(&self) -> usize {
        self.since
    }
}

/// Runs `stepper` until a stopping rule fires, sampling the objective after every iteration
/// (every tenth above 10⁶ entries). Timestamps are measured from `clock`.
pub fn run<S: Stepper + ?Sized>(
    x: &DenseMatrix,
    stepper: &mut S,
    stop: &StopCriteria,
    mask: Option<&ObservationMask>,
    clock: Instant,
) -> Result<SolveOutcome> {
    stop.validate()?;
    let sample_every = if x.len() > 1_000_000 { 10 } else { 1 };
    let mut trace = ConvergenceTrace::new();

    let measure = |f: &FactorPair| -> (f64, Option<KktResiduals>) {
        let e = evaluate(x, f, mask);
        let kkt = stop
            .kkt_tol
            .map(|_| KktResiduals::from_gradients(f, &e.grad_u, &e.grad_v));
        (e.objective, kkt)
    };

    let (mut objective, mut kkt) = measure(stepper.factors());
    if !objective.is_finite() {
        return Err(Error::NonFinite("initial objective".into()));
    }
    trace.push(clock.elapsed().as_secs_f64(), objective, 0);
    let mut stagnation = StagnationTracker::new(objective, stop.stagnation_iters.unwrap_or(usize::MAX));
    let mut iterations = 0;
    let kkt_ok = |k: &Option<KktResiduals>| match (k, stop.kkt_tol) {
        (Some(k), Some(tol)) => k.satisfied(tol),
        _ => false,
    };

    let termination = if kkt_ok(&kkt) {
        Termination::KktConverged
    } else if stop.max_iters == Some(0) {
        Termination::IterationCap
    } else {
        loop {
            stepper.step(x)?;
            iterations += 1;
            let m = measure(stepper.factors());
            objective = m.0;
            kkt = m.1;
            if !objective.is_finite() {
                return Err(Error::NonFinite(format!("objective at iteration {iterations}")));
            }
            let elapsed = clock.elapsed().as_secs_f64();
            if iterations % sample_every == 0 {
                trace.push(elapsed, objective, iterations);
            }
            let stagnated = stagnation.observe(objective);
            if stop.error_target.is_some_and(|t| objective <= t) {
                break Termination::TargetReached;
            }
            if kkt_ok(&kkt) {
                break Termination::KktConverged;
            }
            if stop.time_budget_s.is_some_and(|b| elapsed >= b) {
                break Termination::Budget;
            }
            if stagnated {
                break Termination::Stagnated;
            }
            if stop.max_iters.is_some_and(|n| iterations >= n) {
                break Termination::IterationCap;
            }
        }
    };
    if trace.last().map(|s| s.iteration) != Some(iterations) {
        trace.push(clock.elapsed().as_secs_f64(), objective, iterations);
    }
    let factors = stepper.factors().clone();
    if !factors.is_feasible() {
        return Err(Error::Validation(
            "solver produced factors with negative entries".into(),
        ));
    }
    Ok(SolveOutcome {
        kkt: if stop.kkt_tol.is_some() { kkt } else { None },
        warnings: stepper.warnings(),
        factors,
        trace,
        iterations,
        termination,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Objective improves for `improving` steps, then stays flat.
    struct Plateau {
        f: FactorPair,
        improving: usize,
        steps: usize,
    }

    impl Stepper for Plateau {
        fn step(&mut self, _x: &DenseMatrix) -> Result<()> {
            self.steps += 1;
            if self.steps <= self.improving {
                let v = self.f.u.get(0, 0) * 0.5;
                self.f.u.set(0, 0, v);
            }
            Ok(())
        }
        fn factors(&self) -> &FactorPair {
            &self.f
        }
    }

    fn plateau(improving: usize) -> (DenseMatrix, Plateau) {
        let x = DenseMatrix::zeros(1, 1);
        let f = FactorPair {
            u: DenseMatrix::from_rows(&[&[1.0]]),
            v: DenseMatrix::from_rows(&[&[1.0]]),
        };
        (
            x,
            Plateau {
                f,
                improving,
                steps: 0,
            },
        )
    }

    #[test]
    fn stagnation_fires_after_exactly_the_window() {
        let (x, mut s) = plateau(3);
        let stop = StopCriteria {
            max_iters: Some(10_000),
            ..Default::default()
        };
        let out = run(&x, &mut s, &stop, None, Instant::now()).unwrap();
        assert_eq!(out.termination, Termination::Stagnated);
        assert_eq!(out.iterations, 3 + STAGNATION_ITERS);
    }

    #[test]
    fn tracker_window_boundary() {
        let mut t = StagnationTracker::new(1.0, 1000);
        for _ in 0..999 {
            assert!(!t.observe(1.0));
        }
        assert!(t.observe(1.0));
    }

    #[test]
    fn infinite_target_stops_after_one_iteration() {
        let (x, mut s) = plateau(0);
        let stop = StopCriteria {
            error_target: Some(f64::INFINITY),
            ..Default::default()
        };
        let out = run(&x, &mut s, &stop, None, Instant::now()).unwrap();
        assert_eq!(out.termination, Termination::TargetReached);
        assert_eq!(out.iterations, 1);
        assert!(out.trace.is_well_ordered());
    }
}
