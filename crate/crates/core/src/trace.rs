//! Per-iteration convergence samples shared by solvers, pipelines and the benchmark harness.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub wall_clock_s: f64,
    /// `‖X − U·Vᵀ‖_F` (or the masked variant) at this sample.
    pub objective: f64,
    pub iteration: usize,
}

/// Ordered samples with strictly increasing time and iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    samples: Vec<TraceSample>,
}

impl ConvergenceTrace {
    pub fn new() -> Self {
        ConvergenceTrace::default()
    }

    /// Appends a sample. A timestamp that does not advance (coarse clocks, tiny problems) is
    /// nudged to the next representable value so the ordering invariant holds; iterations that
    /// do not advance are dropped.
    pub fn push(&mut self, wall_clock_s: f64, objective: f64, iteration: usize) {
        let mut t = wall_clock_s.max(0.0);
        if let Some(last) = self.samples.last() {
            if iteration <= last.iteration {
                return;
            }
            if t <= last.wall_clock_s {
                t = next_up(last.wall_clock_s);
            }
        }
        self.samples.push(TraceSample {
            wall_clock_s: t,
            objective,
            iteration,
        });
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&TraceSample> {
        self.samples.last()
    }

    pub fn first(&self) -> Option<&TraceSample> {
        self.samples.first()
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.samples.iter().map(|s| s.objective).reduce(f64::min)
    }

    /// First time at which the objective is at or below `target`.
    pub fn time_to_target(&self, target: f64) -> Option<f64> {
        self.samples
            .iter()
            .find(|s| s.objective <= target)
            .map(|s| s.wall_clock_s)
    }

    /// Shifts every timestamp by `offset` seconds (used to account for time spent before a
    /// solver started, e.g. initialization).
    pub fn offset_time(&mut self, offset: f64) {
        for s in &mut self.samples {
            s.wall_clock_s += offset;
        }
    }

    /// Appends `other` after the current samples, renumbering its iterations to continue
    /// from the last one here and shifting its clock by `time_offset`.
    pub fn extend_shifted(&mut self, other: &ConvergenceTrace, time_offset: f64) {
        let base = self.samples.last().map_or(0, |s| s.iteration + 1);
        let first_iter = other.samples.first().map_or(0, |s| s.iteration);
        for s in &other.samples {
            self.push(
                s.wall_clock_s + time_offset,
                s.objective,
                base + s.iteration - first_iter,
            );
        }
    }

    /// True when each objective is at most `(1 + rel_tol)` times its predecessor.
    pub fn is_nonincreasing(&self, rel_tol: f64) -> bool {
        self.samples
            .windows(2)
            .all(|w| w[1].objective <= w[0].objective * (1.0 + rel_tol) + f64::MIN_POSITIVE)
    }

    /// Whether the ordering invariants hold.
    pub fn is_well_ordered(&self) -> bool {
        self.samples
            .windows(2)
            .all(|w| w[1].wall_clock_s > w[0].wall_clock_s && w[1].iteration > w[0].iteration)
    }
}

fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    if x > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}
