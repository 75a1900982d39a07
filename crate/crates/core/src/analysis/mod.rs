//! Certifying and comparing factorizations: KKT residuals, permutation/scaling equivalence,
//! generalized orthogonal transforms between factor pairs, and E/TE/NE classification.

mod equivalence;
mod kkt;
mod transform;

pub use equivalence::{
    classify_equivalence, permutation_equivalence, ClassifyTolerances, EquivalenceReport, Verdict,
    DEFAULT_EPS,
};
pub use kkt::{kkt_residuals, masked_kkt_residuals, KktResiduals};
pub use transform::{generalized_transform, GeneralizedTransform};

use crate::error::Result;
use crate::matrix::{DenseMatrix, FactorPair};
use crate::metrics::frobenius_objective;

/// Full comparison of `B` against reference `A` on data `X`: permutation equivalence, the
/// error gap `objective(B) − objective(A)`, the error ratio, and the verdict.
pub fn compare_factorizations(
    x: &DenseMatrix,
    a: &FactorPair,
    b: &FactorPair,
    eps: f64,
    tol: &ClassifyTolerances,
) -> Result<EquivalenceReport> {
    let mut report = permutation_equivalence(a, b, eps)?;
    let ea = frobenius_objective(x, a)?;
    let eb = frobenius_objective(x, b)?;
    let gap = eb - ea;
    let kkt_b = if b.is_feasible() {
        Some(kkt_residuals(x, b)?)
    } else {
        None
    };
    report.error_gap = Some(gap);
    // undefined (None) when A is exact and B is not
    report.error_ratio = if ea > 0.0 {
        Some(eb / ea)
    } else if eb == 0.0 {
        Some(1.0)
    } else {
        None
    };
    report.verdict = Some(classify_equivalence(
        report.matched_u_pct,
        report.matched_v_pct,
        kkt_b.as_ref(),
        gap,
        tol,
    ));
    Ok(report)
}
