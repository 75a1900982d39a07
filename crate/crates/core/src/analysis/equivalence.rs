use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix, FactorPair};

use super::kkt::KktResiduals;

/// Default cosine tolerance: columns match when `cos ≥ 1 − ε`.
pub const DEFAULT_EPS: f64 = 0.05;
/// Fraction of agreeing sorted similarity entries a candidate needs to survive validation.
const AGREEMENT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Equivalent local minima up to permutation and scaling.
    E,
    /// Tending toward an equivalent minimum.
    TE,
    /// Non-equivalent local minima.
    NE,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub matched_u_pct: f64,
    pub matched_v_pct: f64,
    /// `(column of A, column of B)` pairs that survived validation for `U`.
    pub permutation: Vec<(usize, usize)>,
    /// Pairs that also hold for `V` under the same permutation.
    pub v_permutation: Vec<(usize, usize)>,
    /// `‖B.U col‖ / ‖A.U col‖` per pair in `permutation`.
    pub scalings: Vec<f64>,
    /// `‖B.V col‖ / ‖A.V col‖` per pair in `v_permutation`.
    pub v_scalings: Vec<f64>,
    /// `max |s_u·s_v − 1|` over pairs matched in both factors.
    pub reciprocal_deviation: f64,
    /// Zero columns excluded from matching (A's then B's count).
    pub zero_columns: (usize, usize),
    /// `objective(B) − objective(A)` when computed against data.
    pub error_gap: Option<f64>,
    /// `objective(B) / objective(A)` when computed against data.
    pub error_ratio: Option<f64>,
    pub verdict: Option<Verdict>,
}

fn unit_columns(m: &DenseMatrix) -> (Vec<Vec<f64>>, Vec<f64>) {
    let norms = m.column_norms();
    let cols = (0..m.cols())
        .map(|j| {
            let c = m.col(j);
            if norms[j] > 0.0 {
                c.iter().map(|v| v / norms[j]).collect()
            } else {
                c
            }
        })
        .collect();
    (cols, norms)
}

/// Greedy injective matching on cosine similarity, best pairs first.
fn greedy_match(a: &[Vec<f64>], an: &[f64], b: &[Vec<f64>], bn: &[f64], eps: f64) -> Vec<(usize, usize)> {
    let mut cands = Vec::new();
    for i in 0..a.len() {
        if an[i] == 0.0 {
            continue;
        }
        for j in 0..b.len() {
            if bn[j] == 0.0 {
                continue;
            }
            let c = dot(&a[i], &b[j]);
            if c >= 1.0 - eps {
                cands.push((c, i, j));
            }
        }
    }
    cands.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in cands {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Cosine rounded to one decimal, ties to even.
fn round1(v: f64) -> f64 {
    (v * 10.0).round_ties_even() / 10.0
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Keeps candidate pairs whose sorted, rounded self- and cross-similarity columns agree on
/// more than 90% of entries.
fn validate(a: &[Vec<f64>], b: &[Vec<f64>], pairs: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let k = pairs.len();
    if k == 0 {
        return Vec::new();
    }
    let cos = |x: &[f64], y: &[f64]| round1(dot(x, y));
    let mut kept = Vec::new();
    for &(ic, jc) in pairs {
        let m_col = sorted_desc(pairs.iter().map(|&(i, _)| cos(&a[i], &a[ic])).collect());
        let n_col = sorted_desc(pairs.iter().map(|&(_, j)| cos(&b[j], &b[jc])).collect());
        let s_col = sorted_desc(pairs.iter().map(|&(i, _)| cos(&a[i], &b[jc])).collect());
        let agree = (0..k)
            .filter(|&t| m_col[t] == n_col[t] && m_col[t] == s_col[t])
            .count();
        if agree as f64 > AGREEMENT * k as f64 {
            kept.push((ic, jc));
        }
    }
    kept
}

/// Identifies columns of `B` that are positively scaled permutations of columns of `A`.
///
/// Candidates come from greedy cosine matching on `U` (`cos ≥ 1 − eps`) and are validated by
/// the sorted similarity-matrix agreement test. The same pairs are then required to match on
/// `V` and validated again.
pub fn permutation_equivalence(a: &FactorPair, b: &FactorPair, eps: f64) -> Result<EquivalenceReport> {
    if a.u.shape() != b.u.shape() || a.v.shape() != b.v.shape() {
        return Err(Error::dims(format!(
            "factor pairs differ in shape: U {:?} vs {:?}, V {:?} vs {:?}",
            a.u.shape(),
            b.u.shape(),
            a.v.shape(),
            b.v.shape()
        )));
    }
    if !(eps >= 0.0 && eps < 2.0) {
        return Err(Error::invalid(format!("eps must lie in [0, 2), got {eps}")));
    }
    let r = a.rank();
    let (au, aun) = unit_columns(&a.u);
    let (bu, bun) = unit_columns(&b.u);
    let (av, avn) = unit_columns(&a.v);
    let (bv, bvn) = unit_columns(&b.v);

    let cands = greedy_match(&au, &aun, &bu, &bun, eps);
    let u_pairs = validate(&au, &bu, &cands);

    let v_cands: Vec<(usize, usize)> = u_pairs
        .iter()
        .copied()
        .filter(|&(i, j)| avn[i] > 0.0 && bvn[j] > 0.0 && dot(&av[i], &bv[j]) >= 1.0 - eps)
        .collect();
    let v_pairs = validate(&av, &bv, &v_cands);

    let scalings: Vec<f64> = u_pairs.iter().map(|&(i, j)| bun[j] / aun[i]).collect();
    let v_scalings: Vec<f64> = v_pairs.iter().map(|&(i, j)| bvn[j] / avn[i]).collect();
    let reciprocal_deviation = v_pairs
        .iter()
        .zip(&v_scalings)
        .map(|(&(i, j), sv)| (bun[j] / aun[i] * sv - 1.0).abs())
        .fold(0.0, f64::max);
    let zeros = |n: &[f64]| n.iter().filter(|v| **v == 0.0).count();

    Ok(EquivalenceReport {
        matched_u_pct: 100.0 * u_pairs.len() as f64 / r as f64,
        matched_v_pct: 100.0 * v_pairs.len() as f64 / r as f64,
        permutation: u_pairs,
        v_permutation: v_pairs,
        scalings,
        v_scalings,
        reciprocal_deviation,
        zero_columns: (zeros(&aun) + zeros(&avn), zeros(&bun) + zeros(&bvn)),
        error_gap: None,
        error_ratio: None,
        verdict: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyTolerances {
    /// Largest `|e_d|` still counted as equal error.
    pub error_gap: f64,
    pub kkt: f64,
}

impl ClassifyTolerances {
    /// `error_gap = 1e−3·‖X‖_F`, `kkt = 1e−6`.
    pub fn for_data_norm(x_norm: f64) -> Self {
        ClassifyTolerances {
            error_gap: 1e-3 * x_norm,
            kkt: 1e-6,
        }
    }
}

/// E when every column matches in both factors and the error gap is negligible; NE when `B`
/// is KKT-stationary yet its error is larger; TE otherwise.
pub fn classify_equivalence(
    matched_u_pct: f64,
    matched_v_pct: f64,
    kkt_b: Option<&KktResiduals>,
    error_gap: f64,
    tol: &ClassifyTolerances,
) -> Verdict {
    let full = matched_u_pct >= 100.0 && matched_v_pct >= 100.0;
    if full && error_gap.abs() <= tol.error_gap {
        Verdict::E
    } else if kkt_b.is_some_and(|k| k.satisfied(tol.kkt)) && error_gap > tol.error_gap {
        Verdict::NE
    } else {
        Verdict::TE
    }
}
