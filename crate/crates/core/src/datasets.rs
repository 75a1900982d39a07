//! Synthetic dataset families (exact nonnegative factorizations with sparse factors, and
//! dense low-rank data with Gaussian noise at a requested SNR) plus file-backed datasets.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{matrix_path, read_matrix_with, write_matrix, MatrixFormat, ReadOptions};
use crate::matrix::{DenseMatrix, FactorPair};
use crate::rng::RngSeed;

const MAX_COLUMN_RETRIES: usize = 1000;

/// Signal-to-noise ratio in dB; `+∞` means no noise. Serialized as a number, or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrDb(pub f64);

impl Serialize for SnrDb {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for SnrDb {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(SnrDb(v)),
            Raw::Text(t) if matches!(t.as_str(), "inf" | "+inf" | "infinity") => {
                Ok(SnrDb(f64::INFINITY))
            }
            Raw::Text(t) => Err(serde::de::Error::custom(format!("invalid SNR '{t}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetKind {
    Exact {
        n: usize,
        m: usize,
        r: usize,
        sparsity: f64,
        seed: RngSeed,
    },
    DenseSnr {
        n: usize,
        k: usize,
        m: usize,
        snr_db: SnrDb,
        seed: RngSeed,
    },
    File {
        path: PathBuf,
        #[serde(default)]
        format: Option<MatrixFormat>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: DatasetKind,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            DatasetKind::Exact {
                n, m, r, sparsity, ..
            } => {
                if *n == 0 || *m == 0 || *r == 0 {
                    return Err(Error::invalid("dataset dimensions must be at least 1"));
                }
                if *r > (*n).min(*m) {
                    return Err(Error::invalid(format!("rank {r} exceeds min({n}, {m})")));
                }
                if !(0.0..1.0).contains(sparsity) {
                    return Err(Error::invalid(format!(
                        "sparsity must lie in [0, 1), got {sparsity}"
                    )));
                }
            }
            DatasetKind::DenseSnr { n, k, m, snr_db, .. } => {
                if *n == 0 || *m == 0 || *k == 0 {
                    return Err(Error::invalid("dataset dimensions must be at least 1"));
                }
                if snr_db.0.is_nan() || snr_db.0 == f64::NEG_INFINITY {
                    return Err(Error::invalid("SNR must be a real number or +inf"));
                }
            }
            DatasetKind::File { .. } => {}
        }
        Ok(())
    }

    /// Builds the data matrix (and ground truth, when known).
    pub fn materialize(&self) -> Result<Dataset> {
        self.validate()?;
        match &self.kind {
            DatasetKind::Exact {
                n,
                m,
                r,
                sparsity,
                seed,
            } => {
                let d = gen_exact(*n, *m, *r, *sparsity, *seed)?;
                let manifest = Manifest {
                    id: self.id.clone(),
                    spec: self.kind.clone(),
                    rows: d.x.rows(),
                    cols: d.x.cols(),
                    realized_snr_db: None,
                    clamp_count: 0,
                    regenerated_columns: d.regenerated_columns,
                    factor_sparsity: Some(d.factor_sparsity()),
                    snr_convention: None,
                    files: Vec::new(),
                };
                Ok(Dataset {
                    x: d.x,
                    ground_truth: Some(FactorPair { u: d.u, v: d.v }),
                    manifest,
                })
            }
            DatasetKind::DenseSnr {
                n,
                k,
                m,
                snr_db,
                seed,
            } => {
                let d = gen_dense_snr(*n, *k, *m, snr_db.0, *seed)?;
                let manifest = Manifest {
                    id: self.id.clone(),
                    spec: self.kind.clone(),
                    rows: d.x.rows(),
                    cols: d.x.cols(),
                    realized_snr_db: Some(SnrDb(d.realized_snr_db)),
                    clamp_count: d.clamp_count,
                    regenerated_columns: 0,
                    factor_sparsity: None,
                    snr_convention: Some(SNR_CONVENTION.into()),
                    files: Vec::new(),
                };
                Ok(Dataset {
                    x: d.x,
                    ground_truth: None,
                    manifest,
                })
            }
            DatasetKind::File { path, format } => {
                let fmt = crate::io::resolve_format(path, *format)?;
                let x = read_matrix_with(
                    path,
                    fmt,
                    ReadOptions {
                        require_nonnegative: true,
                    },
                )?;
                let manifest = Manifest {
                    id: self.id.clone(),
                    spec: self.kind.clone(),
                    rows: x.rows(),
                    cols: x.cols(),
                    realized_snr_db: None,
                    clamp_count: 0,
                    regenerated_columns: 0,
                    factor_sparsity: None,
                    snr_convention: None,
                    files: vec![path.clone()],
                };
                Ok(Dataset {
                    x,
                    ground_truth: None,
                    manifest,
                })
            }
        }
    }
}

pub const SNR_CONVENTION: &str = "snr_db = 10*log10(||W*H||_F^2 / ||N||_F^2), noise rescaled to hit it exactly; negatives clamped to 0 after adding noise";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    pub spec: DatasetKind,
    pub rows: usize,
    pub cols: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub realized_snr_db: Option<SnrDb>,
    pub clamp_count: usize,
    pub regenerated_columns: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub factor_sparsity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub snr_convention: Option<String>,
    /// Files written for (or read from) this dataset.
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub ground_truth: Option<FactorPair>,
    pub manifest: Manifest,
}

impl Dataset {
    /// Writes `X` (and `U`, `V` ground truth when present) plus `<id>.manifest.json` into
    /// `dir`, returning the manifest with file paths filled in.
    pub fn write(&self, dir: &Path, format: MatrixFormat) -> Result<Manifest> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = self.manifest.clone();
        manifest.files.clear();
        let xp = matrix_path(dir, &format!("{}.X", manifest.id), format);
        write_matrix(&self.x, &xp, format)?;
        manifest.files.push(xp);
        if let Some(gt) = &self.ground_truth {
            for (name, m) in [("U", &gt.u), ("V", &gt.v)] {
                let p = matrix_path(dir, &format!("{}.{name}", manifest.id), format);
                write_matrix(m, &p, format)?;
                manifest.files.push(p);
            }
        }
        let mp = dir.join(format!("{}.manifest.json", manifest.id));
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&mp, text).map_err(|e| Error::io(&mp, e))?;
        Ok(manifest)
    }
}

#[derive(Debug, Clone)]
pub struct ExactDataset {
    pub x: DenseMatrix,
    pub u: DenseMatrix,
    pub v: DenseMatrix,
    /// Factor columns redrawn because the sparsity mask zeroed them entirely.
    pub regenerated_columns: usize,
}

impl ExactDataset {
    /// Fraction of zero entries across both factors.
    pub fn factor_sparsity(&self) -> f64 {
        let zeros = self
            .u
            .as_slice()
            .iter()
            .chain(self.v.as_slice())
            .filter(|v| **v == 0.0)
            .count();
        zeros as f64 / (self.u.len() + self.v.len()) as f64
    }
}

fn sparse_uniform(rows: usize, r: usize, s: f64, rng: &mut impl Rng, regenerated: &mut usize) -> Result<DenseMatrix> {
    let mut m = DenseMatrix::zeros(rows, r);
    for k in 0..r {
        let mut attempts = 0;
        loop {
            let col: Vec<f64> = (0..rows)
                .map(|_| {
                    let value: f64 = rng.random();
                    let keep = rng.random::<f64>() >= s;
                    if keep {
                        value
                    } else {
                        0.0
                    }
                })
                .collect();
            if col.iter().any(|v| *v > 0.0) {
                m.set_col(k, &col);
                break;
            }
            attempts += 1;
            *regenerated += 1;
            if attempts >= MAX_COLUMN_RETRIES {
                return Err(Error::invalid(format!(
                    "sparsity {s} leaves factor column {k} empty after {attempts} redraws"
                )));
            }
        }
    }
    Ok(m)
}

/// `X = U·Vᵀ` with uniform(0, 1) factors whose entries are zeroed independently with
/// probability `s`. All-zero factor columns are redrawn.
pub fn gen_exact(n: usize, m: usize, r: usize, s: f64, seed: RngSeed) -> Result<ExactDataset> {
    if n == 0 || m == 0 || r == 0 || r > n.min(m) {
        return Err(Error::invalid(format!("invalid exact dataset shape {n}×{m}, r = {r}")));
    }
    if !(0.0..1.0).contains(&s) {
        return Err(Error::invalid(format!("sparsity must lie in [0, 1), got {s}")));
    }
    let mut rng = seed.rng();
    let mut regenerated = 0;
    let u = sparse_uniform(n, r, s, &mut rng, &mut regenerated)?;
    let v = sparse_uniform(m, r, s, &mut rng, &mut regenerated)?;
    Ok(ExactDataset {
        x: u.matmul_t(&v),
        u,
        v,
        regenerated_columns: regenerated,
    })
}

#[derive(Debug, Clone)]
pub struct SnrDataset {
    pub x: DenseMatrix,
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    /// Noise as added, before clamping.
    pub noise: DenseMatrix,
    pub realized_snr_db: f64,
    /// Entries of `W·H + N` that were negative and set to 0.
    pub clamp_count: usize,
}

/// `X = W·H + N` with uniform(0, 1) `W` (n×k), `H` (k×m) and Gaussian `N` scaled so that
/// `10·log₁₀(‖WH‖²/‖N‖²) = snr_db`. `snr_db = +∞` gives `X = W·H` exactly.
pub fn gen_dense_snr(n: usize, k: usize, m: usize, snr_db: f64, seed: RngSeed) -> Result<SnrDataset> {
    if n == 0 || m == 0 || k == 0 {
        return Err(Error::invalid("dataset dimensions must be at least 1"));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::invalid("SNR must be a real number or +inf"));
    }
    let mut rng = seed.rng();
    let w = DenseMatrix::from_fn(n, k, |_, _| rng.random::<f64>());
    let h = DenseMatrix::from_fn(k, m, |_, _| rng.random::<f64>());
    let signal = w.matmul(&h);
    let signal_norm = signal.frobenius_norm();

    let (noise, realized) = if snr_db == f64::INFINITY {
        (DenseMatrix::zeros(n, m), f64::INFINITY)
    } else {
        let tau = signal_norm / (((n * m) as f64).sqrt() * 10f64.powf(snr_db / 20.0));
        let raw = DenseMatrix::from_fn(n, m, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            tau * z
        });
        let raw_norm = raw.frobenius_norm();
        let wanted = signal_norm / 10f64.powf(snr_db / 20.0);
        let noise = if raw_norm > 0.0 {
            raw.scale(wanted / raw_norm)
        } else {
            raw
        };
        let nn = noise.frobenius_norm();
        (noise, 20.0 * (signal_norm / nn).log10())
    };
    let mut clamp_count = 0;
    let x = signal.zip_map(&noise, |s, e| s + e).map(|v| {
        if v < 0.0 {
            0.0
        } else {
            v
        }
    });
    for (s, e) in signal.as_slice().iter().zip(noise.as_slice()) {
        if s + e < 0.0 {
            clamp_count += 1;
        }
    }
    Ok(SnrDataset {
        x,
        w,
        h,
        noise,
        realized_snr_db: realized,
        clamp_count,
    })
}
