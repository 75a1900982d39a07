//! Equal-time and equal-error benchmark protocols against an eNMF reference run, with JSONL
//! records, CSV traces and a pivoted summary table.

mod protocol;
mod record;
mod report;

pub use protocol::{
    competitor_grid, mark_best_over_inits, reference_record, run_equal_error, run_equal_time,
    CellResult, Competitor, ProtocolOptions, Task, ENMF_LABEL,
};
pub use record::{BenchmarkRecord, Protocol, ProtocolKind};
pub use report::{
    emit_reports, read_records, write_records, write_summary, write_trace, ReportFiles,
    RECORDS_FILE, SUMMARY_FILE, TRACE_DIR,
};

use serde::{Deserialize, Serialize};

use crate::datasets::DatasetSpec;
use crate::error::{Error, Result};
use crate::pipeline::{enmf, PipelineConfig};
use crate::rng::RngSeed;
use crate::solvers::Algorithm;

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

fn default_random_inits() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn default_protocols() -> Vec<ProtocolKind> {
    vec![ProtocolKind::EqualTime, ProtocolKind::EqualError]
}

/// A protocol sweep: every dataset × rank × protocol, competitors from
/// `algorithms × (random_inits random starts + NNDSVD)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub datasets: Vec<DatasetSpec>,
    pub ranks: Vec<usize>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_random_inits")]
    pub random_inits: usize,
    #[serde(default = "default_true")]
    pub nndsvd: bool,
    #[serde(default)]
    pub seed: RngSeed,
    #[serde(default = "default_protocols")]
    pub protocols: Vec<ProtocolKind>,
    /// eNMF settings: any pipeline config field except `r`, which comes from `ranks`.
    #[serde(default)]
    pub pipeline: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    pub options: ProtocolOptions,
}

impl BenchmarkConfig {
    pub fn pipeline_for(&self, r: usize) -> Result<PipelineConfig> {
        let mut map = self.pipeline.clone();
        map.insert("r".into(), serde_json::Value::from(r));
        let cfg: PipelineConfig = serde_json::from_value(serde_json::Value::Object(map))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() || self.ranks.is_empty() {
            return Err(Error::invalid("benchmark needs at least one dataset and one rank"));
        }
        if self.random_inits == 0 && !self.nndsvd {
            return Err(Error::invalid("benchmark needs at least one initialization"));
        }
        for d in &self.datasets {
            d.validate()?;
        }
        for &r in &self.ranks {
            self.pipeline_for(r)?;
        }
        Ok(())
    }
}

/// Runs the whole sweep. eNMF runs first on each (dataset, r) and sets the budget/target for
/// the competitors; its own record is emitted once per protocol.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let competitors = competitor_grid(&cfg.algorithms, cfg.random_inits, cfg.nndsvd, cfg.seed);
    let mut cells = Vec::new();
    for spec in &cfg.datasets {
        let data = spec.materialize()?;
        for &r in &cfg.ranks {
            let reference = enmf(&data.x, &cfg.pipeline_for(r)?)?;
            let task = Task {
                dataset_id: &spec.id,
                x: &data.x,
                r,
                svd_residual: reference.svd_residual,
            };
            for kind in &cfg.protocols {
                let (protocol, mut run) = match kind {
                    ProtocolKind::EqualTime => (
                        Protocol::EqualTime {
                            budget_s: reference.timings.total_s,
                        },
                        run_equal_time(&task, &competitors, &reference, &cfg.options)?,
                    ),
                    ProtocolKind::EqualError => (
                        Protocol::EqualError {
                            target: reference.final_objective,
                        },
                        run_equal_error(&task, &competitors, reference.final_objective, &cfg.options)?,
                    ),
                };
                cells.push(reference_record(&task, &reference, protocol, cfg.options.kkt_tol));
                cells.append(&mut run);
            }
        }
    }
    Ok(cells)
}
