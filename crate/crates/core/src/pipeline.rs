//! End-to-end exterior pipelines: truncated SVD → ADMM rotation → exterior-penalty feasibility
//! → descent to a KKT point, for full data (`enmf`) and masked data (`enmc`).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{kkt_residuals, masked_kkt_residuals, KktResiduals};
use crate::error::{Error, Result};
use crate::feasibility::{attain_feasibility, AscentStats, PenaltyConfig};
use crate::lowrank::{
    balance, randomized_svd, soft_impute_als, truncated_svd, RandomizedSvdConfig, SvdFactors,
};
use crate::mask::ObservationMask;
use crate::matrix::{DenseMatrix, FactorPair};
use crate::metrics::{frobenius_objective, masked_objective};
use crate::rotation::{admm_rotate, RotationConfig, RotationResult};
use crate::solvers::{
    check_rank, run, Hals, MaskedPbcd, ProjectedGradient, StepInit, Stepper, StopCriteria,
    Termination,
};
use crate::trace::ConvergenceTrace;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvdMethod {
    #[default]
    Exact,
    Randomized(RandomizedSvdConfig),
}

/// What happens to the rotated factors when they are not already nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostRotation {
    /// Exterior penalty + PBCD until feasible, then HALS.
    #[default]
    FeasibilityHals,
    /// Clip to the orthant, then HALS.
    ProjectionHals,
    /// Clip, then projected gradient with adaptive Armijo steps.
    ProjectionGradmult,
    /// Clip, then projected gradient from the averaged optimal row step.
    ProjectionGd,
    /// Exterior penalty + PBCD, then projected gradient from the averaged optimal row step.
    FeasibilityGd,
}

impl PostRotation {
    pub const ALL: [PostRotation; 5] = [
        PostRotation::FeasibilityHals,
        PostRotation::ProjectionHals,
        PostRotation::ProjectionGradmult,
        PostRotation::ProjectionGd,
        PostRotation::FeasibilityGd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PostRotation::FeasibilityHals => "feasibility_hals",
            PostRotation::ProjectionHals => "projection_hals",
            PostRotation::ProjectionGradmult => "projection_gradmult",
            PostRotation::ProjectionGd => "projection_gd",
            PostRotation::FeasibilityGd => "feasibility_gd",
        }
    }

    fn uses_feasibility(self) -> bool {
        matches!(self, PostRotation::FeasibilityHals | PostRotation::FeasibilityGd)
    }
}

impl std::str::FromStr for PostRotation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PostRotation::ALL
            .into_iter()
            .find(|p| p.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::invalid(format!("unknown post-rotation strategy '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescentStop {
    /// Descent ends once `δ_W` and `σ_W` are at or below this value.
    pub kkt_tol: f64,
    pub max_iters: usize,
    pub time_budget_s: Option<f64>,
    pub error_target: Option<f64>,
    pub stagnation_iters: Option<usize>,
}

impl Default for DescentStop {
    fn default() -> Self {
        DescentStop {
            kkt_tol: 1e-6,
            max_iters: 100_000,
            time_budget_s: None,
            error_target: None,
            stagnation_iters: None,
        }
    }
}

impl DescentStop {
    fn criteria(&self) -> StopCriteria {
        StopCriteria {
            max_iters: Some(self.max_iters),
            time_budget_s: self.time_budget_s,
            error_target: self.error_target,
            kkt_tol: Some(self.kkt_tol),
            stagnation_iters: self.stagnation_iters,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionConfig {
    pub soft_impute_max_iter: usize,
    pub soft_impute_tol: f64,
    /// PBCD sweeps per factor and descent iteration.
    pub pbcd_inner: usize,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            soft_impute_max_iter: 500,
            soft_impute_tol: 1e-10,
            pbcd_inner: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub r: usize,
    #[serde(default)]
    pub svd: SvdMethod,
    #[serde(default)]
    pub rotation: RotationConfig,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    #[serde(default)]
    pub post_rotation: PostRotation,
    #[serde(default)]
    pub descent_stop: DescentStop,
    #[serde(default)]
    pub completion: CompletionConfig,
    /// Column sweeps per block and HALS descent iteration (1 is plain HALS).
    #[serde(default = "default_descent_inner")]
    pub descent_inner: usize,
}

fn default_descent_inner() -> usize {
    10
}

impl PipelineConfig {
    pub fn new(r: usize) -> Self {
        PipelineConfig {
            r,
            svd: SvdMethod::Exact,
            rotation: RotationConfig::default(),
            penalty: PenaltyConfig::default(),
            post_rotation: PostRotation::FeasibilityHals,
            descent_stop: DescentStop::default(),
            completion: CompletionConfig::default(),
            descent_inner: default_descent_inner(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::invalid("rank r must be at least 1"));
        }
        self.rotation.validate()?;
        self.penalty.validate()?;
        if !(self.descent_stop.kkt_tol >= 0.0) {
            return Err(Error::invalid("descent kkt_tol must be nonnegative"));
        }
        Ok(())
    }
}

/// Wall-clock seconds per phase, measured at phase boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub svd_s: f64,
    pub rotation_s: f64,
    /// Feasibility plus descent; exactly 0 on the one-shot path.
    pub feasibility_descent_s: f64,
    pub feasibility_s: f64,
    pub descent_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub factors: FactorPair,
    /// Feasible iterates only, timed from the start of the pipeline.
    pub trace: ConvergenceTrace,
    pub timings: PhaseTimings,
    pub svd_residual: f64,
    pub singular_values: Vec<f64>,
    pub rotation: RotationResult,
    /// Objective of the rotated (possibly infeasible) factors.
    pub rotated_objective: f64,
    /// Objective once both factors first became nonnegative (after feasibility or projection).
    pub feasible_objective: f64,
    pub final_objective: f64,
    pub ascent: Option<AscentStats>,
    pub descent_iterations: usize,
    pub descent_termination: Option<Termination>,
    pub kkt: KktResiduals,
    /// The rotated factors were already nonnegative; feasibility and descent were skipped.
    pub one_shot: bool,
    pub warnings: Vec<String>,
}

impl PipelineOutput {
    /// `objective(rotated) ≤ objective(feasible)` and `objective(final) ≤ objective(feasible)`,
    /// each up to `rel_tol` relative slack.
    pub fn sandwich_holds(&self, rel_tol: f64) -> bool {
        let slack = rel_tol * self.feasible_objective.max(f64::MIN_POSITIVE);
        self.rotated_objective <= self.feasible_objective + slack
            && self.final_objective <= self.feasible_objective + slack
    }
}

fn svd_of(x: &DenseMatrix, cfg: &PipelineConfig) -> Result<SvdFactors> {
    match cfg.svd {
        SvdMethod::Exact => truncated_svd(x, cfg.r),
        SvdMethod::Randomized(rc) => randomized_svd(x, cfg.r, &rc),
    }
}

fn descent_stepper(post: PostRotation, start: FactorPair, inner: usize) -> Box<dyn Stepper + Send> {
    match post {
        PostRotation::FeasibilityHals | PostRotation::ProjectionHals => {
            Box::new(Hals::with_inner(start, inner))
        }
        PostRotation::ProjectionGradmult => {
            Box::new(ProjectedGradient::new(start, StepInit::Adaptive))
        }
        PostRotation::ProjectionGd | PostRotation::FeasibilityGd => {
            Box::new(ProjectedGradient::new(start, StepInit::RowAverage))
        }
    }
}

/// Where the exterior point enters the orthant: shared tail of both pipelines.
struct Tail {
    factors: FactorPair,
    trace: ConvergenceTrace,
    feasible_objective: f64,
    final_objective: f64,
    ascent: Option<AscentStats>,
    descent_iterations: usize,
    descent_termination: Option<Termination>,
    kkt: KktResiduals,
    feasibility_s: f64,
    descent_s: f64,
    one_shot: bool,
    warnings: Vec<String>,
}

/// Exterior-point NMF of nonnegative `X`.
///
/// If the rotated SVD factors are already nonnegative they are returned directly (no
/// feasibility or descent time). Otherwise the configured post-rotation strategy runs and
/// descent continues until the KKT residuals fall below `descent_stop.kkt_tol`.
pub fn enmf(x: &DenseMatrix, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    check_rank(x, cfg.r)?;
    if !x.is_nonnegative() {
        return Err(Error::Validation(format!(
            "eNMF needs nonnegative data; min entry is {}",
            x.min_entry()
        )));
    }
    let clock = Instant::now();
    let svd = svd_of(x, cfg)?;
    let svd_s = clock.elapsed().as_secs_f64();
    let rotation = admm_rotate(&svd.factors(), &cfg.rotation)?;
    let rotated = rotation.apply(&svd.factors());
    let rotation_s = clock.elapsed().as_secs_f64() - svd_s;
    let rotated_objective = frobenius_objective(x, &rotated)?;

    let tail = finish(x, None, rotated, rotated_objective, cfg, clock)?;
    assemble(svd, rotation, rotated_objective, svd_s, rotation_s, tail, clock)
}

fn finish(
    x: &DenseMatrix,
    mask: Option<&ObservationMask>,
    rotated: FactorPair,
    rotated_objective: f64,
    cfg: &PipelineConfig,
    clock: Instant,
) -> Result<Tail> {
    let mut warnings = Vec::new();
    let kkt_of = |f: &FactorPair| match mask {
        Some(m) => masked_kkt_residuals(x, f, m),
        None => kkt_residuals(x, f),
    };
    let objective_of = |f: &FactorPair| match mask {
        Some(m) => masked_objective(x, f, m),
        None => frobenius_objective(x, f),
    };

    if rotated.is_feasible() {
        let mut trace = ConvergenceTrace::new();
        trace.push(clock.elapsed().as_secs_f64(), rotated_objective, 0);
        return Ok(Tail {
            kkt: kkt_of(&rotated)?,
            factors: rotated,
            trace,
            feasible_objective: rotated_objective,
            final_objective: rotated_objective,
            ascent: None,
            descent_iterations: 0,
            descent_termination: None,
            feasibility_s: 0.0,
            descent_s: 0.0,
            one_shot: true,
            warnings,
        });
    }

    let phase = Instant::now();
    let post = if mask.is_some() {
        PostRotation::FeasibilityHals
    } else {
        cfg.post_rotation
    };
    let (feasible, ascent) = if post.uses_feasibility() {
        let res = attain_feasibility(x, &rotated, &cfg.penalty, mask)?;
        if res.stats.fallback_projection {
            warnings.push(format!(
                "feasibility not reached after {} sweeps; projected onto the orthant",
                res.stats.sweeps
            ));
        }
        (res.factors, Some(res.stats))
    } else {
        (rotated.positive_part(), None)
    };
    let feasibility_s = phase.elapsed().as_secs_f64();
    let feasible_objective = objective_of(&feasible)?;

    let phase = Instant::now();
    let stop = cfg.descent_stop.criteria();
    let outcome = match mask {
        Some(m) => {
            let mut stepper = MaskedPbcd::new(x, m, feasible, cfg.completion.pbcd_inner);
            run(&m.zero_fill(x), &mut stepper, &stop, Some(m), clock)?
        }
        None => {
            let mut stepper = descent_stepper(post, feasible, cfg.descent_inner);
            run(x, stepper.as_mut(), &stop, None, clock)?
        }
    };
    let descent_s = phase.elapsed().as_secs_f64();
    warnings.extend(outcome.warnings.iter().cloned());
    if outcome.termination != Termination::KktConverged {
        warnings.push(format!(
            "descent stopped by {} before the KKT tolerance was met",
            outcome.termination.label()
        ));
    }
    let kkt = kkt_of(&outcome.factors)?;
    Ok(Tail {
        final_objective: outcome.objective,
        factors: outcome.factors,
        trace: outcome.trace,
        feasible_objective,
        ascent,
        descent_iterations: outcome.iterations,
        descent_termination: Some(outcome.termination),
        kkt,
        feasibility_s,
        descent_s,
        one_shot: false,
        warnings,
    })
}

fn assemble(
    svd: SvdFactors,
    rotation: RotationResult,
    rotated_objective: f64,
    svd_s: f64,
    rotation_s: f64,
    tail: Tail,
    clock: Instant,
) -> Result<PipelineOutput> {
    let total_s = clock.elapsed().as_secs_f64();
    let mut warnings = tail.warnings;
    if rotation.rank_deficient_steps > 0 {
        warnings.push(format!(
            "{} rank-deficient Procrustes steps during rotation",
            rotation.rank_deficient_steps
        ));
    }
    let feasibility_descent_s = if tail.one_shot {
        0.0
    } else {
        tail.feasibility_s + tail.descent_s
    };
    let mut out = PipelineOutput {
        factors: tail.factors,
        trace: tail.trace,
        timings: PhaseTimings {
            svd_s,
            rotation_s,
            feasibility_descent_s,
            feasibility_s: tail.feasibility_s,
            descent_s: tail.descent_s,
            total_s,
        },
        svd_residual: svd.residual,
        singular_values: svd.singular_values,
        rotation,
        rotated_objective,
        feasible_objective: tail.feasible_objective,
        final_objective: tail.final_objective,
        ascent: tail.ascent,
        descent_iterations: tail.descent_iterations,
        descent_termination: tail.descent_termination,
        kkt: tail.kkt,
        one_shot: tail.one_shot,
        warnings,
    };
    if !out.sandwich_holds(1e-12) {
        out.warnings.push(format!(
            "objective ordering violated: rotated {:.6e}, feasible {:.6e}, final {:.6e}",
            out.rotated_objective, out.feasible_objective, out.final_objective
        ));
    }
    Ok(out)
}

/// Exterior-point nonnegative matrix completion over the observed entries of `mask`.
///
/// softImpute-ALS provides the unconstrained optimum, which is rebalanced, rotated, lifted to
/// feasibility with masked PBCD and refined by masked PBCD descent. Unobserved entries of `X`
/// are never read. A full mask reduces to [`enmf`].
pub fn enmc(x: &DenseMatrix, mask: &ObservationMask, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    check_rank(x, cfg.r)?;
    mask.check_shape(x)?;
    if mask.is_full() {
        return enmf(x, cfg);
    }
    let xz = mask.zero_fill(x);
    if !xz.is_nonnegative() {
        return Err(Error::Validation(
            "eNMC needs nonnegative observed entries".into(),
        ));
    }
    let clock = Instant::now();
    let si = soft_impute_als(
        &xz,
        mask,
        cfg.r,
        cfg.completion.soft_impute_max_iter,
        cfg.completion.soft_impute_tol,
    )?;
    let start = balance(&si.factors)?;
    let init_objective = masked_objective(&xz, &start, mask)?;
    let svd_s = clock.elapsed().as_secs_f64();

    let rotation = admm_rotate(&start, &cfg.rotation)?;
    let rotated = rotation.apply(&start);
    let rotation_s = clock.elapsed().as_secs_f64() - svd_s;
    let rotated_objective = masked_objective(&xz, &rotated, mask)?;

    let mut tail = finish(&xz, Some(mask), rotated, rotated_objective, cfg, clock)?;
    let mut warnings = si.warnings;
    warnings.append(&mut tail.warnings);
    tail.warnings = warnings;
    let norms = start.u.column_norms();
    let pseudo = SvdFactors {
        singular_values: norms.iter().map(|v| v * v).collect(),
        ustar: start.u,
        vstar: start.v,
        residual: init_objective,
    };
    assemble(pseudo, rotation, rotated_objective, svd_s, rotation_s, tail, clock)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonnegative_singular_factors_take_the_one_shot_path() {
        // singular vectors are coordinate vectors, computed without round-off
        let x = DenseMatrix::from_fn(6, 5, |i, j| if i == j { 5.0 - i as f64 } else { 0.0 });
        let out = enmf(&x, &PipelineConfig::new(2)).unwrap();
        assert!(out.one_shot);
        assert_eq!(out.timings.feasibility_descent_s, 0.0);
        assert!((out.final_objective - 14f64.sqrt()).abs() <= 1e-12);
        assert_eq!(out.rotation.iterations, 0);
    }

    #[test]
    fn negative_data_is_rejected() {
        let x = DenseMatrix::from_rows(&[&[1.0, -1.0], &[0.0, 2.0]]);
        assert!(matches!(
            enmf(&x, &PipelineConfig::new(1)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn config_round_trips_through_json() {
        let mut cfg = PipelineConfig::new(4);
        cfg.post_rotation = PostRotation::ProjectionGd;
        cfg.svd = SvdMethod::Randomized(RandomizedSvdConfig::default());
        let s = serde_json::to_string_pretty(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
        let minimal: PipelineConfig = serde_json::from_str(r#"{"r": 3}"#).unwrap();
        assert_eq!(minimal, PipelineConfig::new(3));
    }
}
