use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::kkt_residuals;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::metrics::ratio_to_baseline;
use crate::pipeline::PipelineOutput;
use crate::rng::RngSeed;
use crate::solvers::{
    solve_with_clock, Algorithm, InitStrategy, SolverConfig, StopCriteria, Termination,
    STAGNATION_ITERS,
};
use crate::trace::ConvergenceTrace;

use super::record::{BenchmarkRecord, Protocol};

pub const ENMF_LABEL: &str = "enmf";

/// One competitor cell: an algorithm started from one initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct Competitor {
    pub algorithm: Algorithm,
    pub init: InitStrategy,
    pub params: BTreeMap<String, f64>,
}

/// Every algorithm crossed with `random` seeded random starts plus (optionally) NNDSVD.
pub fn competitor_grid(algorithms: &[Algorithm], random: usize, nndsvd: bool, seed: RngSeed) -> Vec<Competitor> {
    let mut inits: Vec<InitStrategy> = (0..random)
        .map(|k| InitStrategy::Random(seed.derive(k as u64)))
        .collect();
    if nndsvd {
        inits.push(InitStrategy::Nndsvd);
    }
    algorithms
        .iter()
        .flat_map(|&algorithm| {
            inits.iter().map(move |init| Competitor {
                algorithm,
                init: init.clone(),
                params: BTreeMap::new(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolOptions {
    /// Competitors stop early once their KKT residuals pass this tolerance.
    pub kkt_tol: f64,
    pub stagnation_iters: usize,
    /// Hard iteration cap for either protocol (none by default).
    pub max_iters: Option<usize>,
    /// Wall-clock safety cap for equal-error runs that never reach the target.
    pub equal_error_cap_s: Option<f64>,
    /// Worker threads; 0 uses every core, 1 serializes all cells.
    pub threads: usize,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            kkt_tol: 1e-6,
            stagnation_iters: STAGNATION_ITERS,
            max_iters: None,
            equal_error_cap_s: Some(600.0),
            threads: 0,
        }
    }
}

/// Dataset-level context shared by every cell.
#[derive(Debug, Clone, Copy)]
pub struct Task<'a> {
    pub dataset_id: &'a str,
    pub x: &'a DenseMatrix,
    pub r: usize,
    /// Rank-r SVD residual, the denominator of the relative error.
    pub svd_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub record: BenchmarkRecord,
    pub trace: ConvergenceTrace,
}

impl CellResult {
    /// File-name friendly identifier of the cell.
    pub fn trace_name(&self) -> String {
        let r = &self.record;
        let raw = format!(
            "{}_r{}_{}_{}_{}",
            r.dataset_id,
            r.r,
            r.algorithm,
            r.init_label,
            r.protocol.kind().name()
        );
        raw.chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
            .collect()
    }
}

fn relative(objective: f64, baseline: f64) -> Option<f64> {
    ratio_to_baseline(objective, baseline).ok()
}

/// The eNMF reference run expressed as a record under `protocol`.
pub fn reference_record(task: &Task, out: &PipelineOutput, protocol: Protocol, kkt_tol: f64) -> CellResult {
    let time_to_target_s = match protocol {
        Protocol::EqualError { target } => out.trace.time_to_target(target),
        Protocol::EqualTime { .. } => None,
    };
    let termination = if out.kkt.satisfied(kkt_tol) {
        Termination::KktConverged
    } else {
        out.descent_termination.unwrap_or(Termination::IterationCap)
    };
    CellResult {
        record: BenchmarkRecord {
            dataset_id: task.dataset_id.to_string(),
            algorithm: ENMF_LABEL.into(),
            init_label: "svd".into(),
            r: task.r,
            protocol,
            final_objective: Some(out.final_objective),
            relative_error: relative(out.final_objective, task.svd_residual),
            runtime_s: out.timings.total_s,
            time_to_target_s,
            iterations: out.descent_iterations,
            kkt: Some(out.kkt),
            termination,
            phase_timings: Some(out.timings),
            best_over_inits: true,
            error: None,
        },
        trace: out.trace.clone(),
    }
}

fn run_cell(task: &Task, c: &Competitor, protocol: Protocol, stop: &StopCriteria) -> CellResult {
    let clock = Instant::now();
    let cfg = SolverConfig {
        algorithm: c.algorithm,
        stop: *stop,
        init: c.init.clone(),
        inner_params: c.params.clone(),
    };
    let base = BenchmarkRecord {
        dataset_id: task.dataset_id.to_string(),
        algorithm: c.algorithm.name().into(),
        init_label: c.init.label(),
        r: task.r,
        protocol,
        final_objective: None,
        relative_error: None,
        runtime_s: 0.0,
        time_to_target_s: None,
        iterations: 0,
        kkt: None,
        termination: Termination::Error,
        phase_timings: None,
        best_over_inits: false,
        error: None,
    };
    match solve_with_clock(task.x, task.r, &cfg, clock) {
        Ok(out) => {
            let runtime_s = out
                .trace
                .last()
                .map_or_else(|| clock.elapsed().as_secs_f64(), |s| s.wall_clock_s);
            let kkt = out.kkt.or_else(|| kkt_residuals(task.x, &out.factors).ok());
            let time_to_target_s = match protocol {
                Protocol::EqualError { target } => out.trace.time_to_target(target),
                Protocol::EqualTime { .. } => None,
            };
            CellResult {
                record: BenchmarkRecord {
                    final_objective: Some(out.objective),
                    relative_error: relative(out.objective, task.svd_residual),
                    runtime_s,
                    time_to_target_s,
                    iterations: out.iterations,
                    kkt,
                    termination: out.termination,
                    ..base
                },
                trace: out.trace,
            }
        }
        Err(e) => CellResult {
            record: BenchmarkRecord {
                runtime_s: clock.elapsed().as_secs_f64(),
                error: Some(e.to_string()),
                ..base
            },
            trace: ConvergenceTrace::new(),
        },
    }
}

fn run_cells(task: &Task, competitors: &[Competitor], protocol: Protocol, stop: StopCriteria, threads: usize) -> Result<Vec<CellResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let mut cells: Vec<CellResult> = pool.install(|| {
        competitors
            .par_iter()
            .map(|c| run_cell(task, c, protocol, &stop))
            .collect()
    });
    mark_best_over_inits(&mut cells);
    Ok(cells)
}

/// Flags, per algorithm, the run with the lowest final objective (ties: lowest runtime).
pub fn mark_best_over_inits(cells: &mut [CellResult]) {
    let mut best: BTreeMap<String, usize> = BTreeMap::new();
    for (k, c) in cells.iter().enumerate() {
        let Some(obj) = c.record.final_objective else {
            continue;
        };
        let better = match best.get(&c.record.algorithm) {
            None => true,
            Some(&b) => {
                let cur = &cells[b].record;
                let cur_obj = cur.final_objective.unwrap_or(f64::INFINITY);
                obj < cur_obj || (obj == cur_obj && c.record.runtime_s < cur.runtime_s)
            }
        };
        if better {
            best.insert(c.record.algorithm.clone(), k);
        }
    }
    for c in cells.iter_mut() {
        c.record.best_over_inits = false;
    }
    for k in best.into_values() {
        cells[k].record.best_over_inits = true;
    }
}

/// Runs every competitor for at least the reference eNMF wall time (initialization
/// included), stopping earlier only on KKT convergence.
pub fn run_equal_time(
    task: &Task,
    competitors: &[Competitor],
    reference: &PipelineOutput,
    opts: &ProtocolOptions,
) -> Result<Vec<CellResult>> {
    let budget_s = reference.timings.total_s;
    let stop = StopCriteria {
        max_iters: opts.max_iters,
        time_budget_s: Some(budget_s),
        error_target: None,
        kkt_tol: Some(opts.kkt_tol),
        stagnation_iters: None,
    };
    run_cells(task, competitors, Protocol::EqualTime { budget_s }, stop, opts.threads)
}

/// Runs every competitor until its objective reaches `target`, it converges (KKT) above the
/// target, or it stagnates.
pub fn run_equal_error(
    task: &Task,
    competitors: &[Competitor],
    target: f64,
    opts: &ProtocolOptions,
) -> Result<Vec<CellResult>> {
    if target.is_nan() || target < 0.0 {
        return Err(Error::invalid(format!("target must be nonnegative, got {target}")));
    }
    let stop = StopCriteria {
        max_iters: opts.max_iters,
        time_budget_s: opts.equal_error_cap_s,
        error_target: Some(target),
        kkt_tol: Some(opts.kkt_tol),
        stagnation_iters: Some(opts.stagnation_iters),
    };
    run_cells(task, competitors, Protocol::EqualError { target }, stop, opts.threads)
}
