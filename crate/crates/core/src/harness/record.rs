use serde::{Deserialize, Serialize};

use crate::analysis::KktResiduals;
use crate::pipeline::PhaseTimings;
use crate::solvers::Termination;

/// Reals that may be `+∞`, which JSON cannot hold; written as the string `"inf"`.
mod extended_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            Err(serde::ser::Error::custom(format!("cannot serialize {v}")))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number, got '{t}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    /// Competitors run at least as long as the reference eNMF run took.
    EqualTime { budget_s: f64 },
    /// Competitors run until they reach the reference objective.
    EqualError {
        #[serde(with = "extended_real")]
        target: f64,
    },
}

impl Protocol {
    pub fn kind(&self) -> ProtocolKind {
        match self {
            Protocol::EqualTime { .. } => ProtocolKind::EqualTime,
            Protocol::EqualError { .. } => ProtocolKind::EqualError,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    EqualTime,
    EqualError,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::EqualTime => "equal_time",
            ProtocolKind::EqualError => "equal_error",
        }
    }
}

/// One (dataset, algorithm, init, r, protocol) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub dataset_id: String,
    pub algorithm: String,
    pub init_label: String,
    pub r: usize,
    pub protocol: Protocol,
    /// `‖X − UVᵀ‖_F`; absent when the solver aborted.
    pub final_objective: Option<f64>,
    /// Objective over the rank-r SVD residual; absent on exact-rank data or abort.
    pub relative_error: Option<f64>,
    /// Wall time at termination, initialization included.
    pub runtime_s: f64,
    /// First time the objective was at or below the equal-error target.
    pub time_to_target_s: Option<f64>,
    pub iterations: usize,
    pub kkt: Option<KktResiduals>,
    pub termination: Termination,
    pub phase_timings: Option<PhaseTimings>,
    /// Best run of this algorithm over its initializations (lowest objective, then runtime).
    pub best_over_inits: bool,
    pub error: Option<String>,
}
