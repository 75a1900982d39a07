//! HALS (the descent stage of the exterior method) and the interior baselines, behind one
//! [`Stepper`] interface driven by a shared stopping-rule runner.

mod admm;
mod als;
mod gradient;
mod hals;
mod init;
mod masked;
mod mult;
mod runner;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use admm::{admm_nnls, AoAdmm, NmfAdmm, AO_ADMM_INNER};
pub use als::AlsProjected;
pub use gradient::{ProjectedGradient, StepInit};
pub use hals::Hals;
pub use init::{nndsvd_init, random_init, random_init_for};
pub use masked::MaskedPbcd;
pub use mult::{Mult, MULT_FLOOR};
pub use runner::{
    run, SolveOutcome, StagnationTracker, StopCriteria, Stepper, Termination, STAGNATION_ITERS,
};

use crate::error::{Error, Result};
use crate::lowrank::truncated_svd;
use crate::mask::ObservationMask;
use crate::matrix::{DenseMatrix, FactorPair};
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Hals,
    Mult,
    GradMult,
    AlsProjected,
    AoAdmm,
    NmfAdmm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Hals,
        Algorithm::Mult,
        Algorithm::GradMult,
        Algorithm::AlsProjected,
        Algorithm::AoAdmm,
        Algorithm::NmfAdmm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Hals => "hals",
            Algorithm::Mult => "mult",
            Algorithm::GradMult => "grad_mult",
            Algorithm::AlsProjected => "als_projected",
            Algorithm::AoAdmm => "ao_admm",
            Algorithm::NmfAdmm => "nmf_admm",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::invalid(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    Random(RngSeed),
    Nndsvd,
    Given(FactorPair),
}

impl InitStrategy {
    pub fn label(&self) -> String {
        match self {
            InitStrategy::Random(s) => format!("random:{}", s.0),
            InitStrategy::Nndsvd => "nndsvd".into(),
            InitStrategy::Given(_) => "given".into(),
        }
    }

    pub fn build(&self, x: &DenseMatrix, r: usize) -> Result<FactorPair> {
        let f = match self {
            InitStrategy::Random(seed) => random_init_for(x, r, *seed),
            InitStrategy::Nndsvd => nndsvd_init(&truncated_svd(x, r)?),
            InitStrategy::Given(f) => {
                f.check_against(x)?;
                if f.rank() != r {
                    return Err(Error::dims(format!(
                        "given factors have rank {}, expected {r}",
                        f.rank()
                    )));
                }
                f.clone()
            }
        };
        if !f.is_feasible() {
            return Err(Error::Validation(
                "initial factors must be entrywise nonnegative".into(),
            ));
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub stop: StopCriteria,
    pub init: InitStrategy,
    /// Algorithm-specific knobs: `inner` (ao_admm inner iterations), `penalty` and `gamma`
    /// (nmf_admm).
    #[serde(default)]
    pub inner_params: BTreeMap<String, f64>,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, init: InitStrategy, stop: StopCriteria) -> Self {
        SolverConfig {
            algorithm,
            stop,
            init,
            inner_params: BTreeMap::new(),
        }
    }
}

/// Builds the stepper for `algorithm` starting at `start`.
pub fn make_stepper(
    algorithm: Algorithm,
    start: FactorPair,
    params: &BTreeMap<String, f64>,
) -> Box<dyn Stepper + Send> {
    let param = |k: &str| params.get(k).copied();
    match algorithm {
        Algorithm::Hals => Box::new(Hals::new(start)),
        Algorithm::Mult => Box::new(Mult::new(start)),
        Algorithm::GradMult => Box::new(ProjectedGradient::new(start, StepInit::Adaptive)),
        Algorithm::AlsProjected => Box::new(AlsProjected::new(start)),
        Algorithm::AoAdmm => Box::new(AoAdmm::new(
            start,
            param("inner").map_or(AO_ADMM_INNER, |v| v as usize),
        )),
        Algorithm::NmfAdmm => Box::new(NmfAdmm::new(
            start,
            param("penalty"),
            param("gamma").unwrap_or(1.618),
        )),
    }
}

/// Initializes and runs one solver; the clock (and any time budget) includes initialization.
pub fn solve(x: &DenseMatrix, r: usize, cfg: &SolverConfig) -> Result<SolveOutcome> {
    solve_with_clock(x, r, cfg, Instant::now())
}

pub fn solve_with_clock(
    x: &DenseMatrix,
    r: usize,
    cfg: &SolverConfig,
    clock: Instant,
) -> Result<SolveOutcome> {
    check_rank(x, r)?;
    if !x.is_nonnegative() {
        return Err(Error::Validation("data matrix has negative entries".into()));
    }
    let start = cfg.init.build(x, r)?;
    let mut stepper = make_stepper(cfg.algorithm, start, &cfg.inner_params);
    run(x, stepper.as_mut(), &cfg.stop, None, clock)
}

/// Masked multiplicative-update completion baseline.
pub fn masked_mult(
    x: &DenseMatrix,
    mask: &ObservationMask,
    start: FactorPair,
    stop: &StopCriteria,
    clock: Instant,
) -> Result<SolveOutcome> {
    mask.check_shape(x)?;
    let xz = mask.zero_fill(x);
    let mut stepper = Mult::masked(start, mask.clone());
    run(&xz, &mut stepper, stop, Some(mask), clock)
}

pub(crate) fn check_rank(x: &DenseMatrix, r: usize) -> Result<()> {
    let (n, m) = x.shape();
    if r == 0 || r > n.min(m) {
        return Err(Error::invalid(format!(
            "rank {r} out of range for a {n}×{m} matrix"
        )));
    }
    Ok(())
}
