use std::fs;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use enmf::analysis::{compare_factorizations, generalized_transform, kkt_residuals, permutation_equivalence, ClassifyTolerances};
use enmf::datasets::{DatasetKind, DatasetSpec, SnrDb};
use enmf::harness::{emit_reports, run_benchmark, write_trace, BenchmarkConfig};
use enmf::io::{matrix_path, read_matrix, read_matrix_with, resolve_format, write_matrix, MatrixFormat, ReadOptions};
use enmf::lowrank::{truncated_svd, RandomizedSvdConfig};
use enmf::pipeline::{enmc, enmf as run_enmf, PipelineConfig, SvdMethod};
use enmf::rotation::{admm_rotate, rsr_admm, RotationConfig};
use enmf::solvers::{masked_mult, solve, Algorithm, InitStrategy, SolverConfig, StopCriteria, STAGNATION_ITERS};
use enmf::{DenseMatrix, FactorPair, ObservationMask, RngSeed};

/// Exterior-point nonnegative matrix factorization toolkit.
#[derive(Parser)]
#[command(name = "enmf", version, about)]
struct Cli {
    /// Seed for every random choice the command makes (overrides config seeds).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Matrix file format for outputs: mtx, csv or bin.
    #[arg(long, global = true, default_value = "mtx")]
    format: MatrixFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (X, ground truth when known, manifest).
    Generate(GenerateArgs),
    /// Factorize one data matrix with eNMF or a baseline.
    Factorize(FactorizeArgs),
    /// Run an equal-time / equal-error sweep from a JSON config.
    Benchmark(BenchmarkArgs),
    /// Certify a factor pair with KKT residuals.
    Kkt(KktArgs),
    /// Equivalence analysis of two factor pairs.
    Compare(CompareArgs),
    /// Rotate the rank-r SVD factors toward the nonnegative orthant.
    Rotate(RotateArgs),
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true)]
struct GenerateArgs {
    /// JSON file with one dataset spec or a list of them.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    kind: Option<GenerateKind>,
}

#[derive(Subcommand)]
enum GenerateKind {
    /// X = U·Vᵀ with uniform factors and Bernoulli sparsity.
    Exact {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        sparsity: f64,
        #[arg(long)]
        id: Option<String>,
    },
    /// Dense nonnegative rank-k signal plus Gaussian noise at a given SNR.
    DenseSnr {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        m: usize,
        /// Decibels, or "inf" for no noise.
        #[arg(long)]
        snr_db: String,
        #[arg(long)]
        id: Option<String>,
    },
}

#[derive(Args)]
struct FactorizeArgs {
    /// Data matrix (format from extension).
    #[arg(long)]
    data: PathBuf,
    #[arg(short, long)]
    rank: usize,
    /// enmf, hals, mult, grad_mult, als_projected, ao_admm or nmf_admm.
    #[arg(long, default_value = "enmf")]
    algorithm: String,
    /// Initialization for baselines.
    #[arg(long, value_enum, default_value = "random")]
    init: InitKind,
    /// 0/1 observation mask: eNMF becomes eNMC, mult becomes masked mult.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// JSON object of eNMF pipeline settings (any field except r).
    #[arg(long)]
    pipeline: Option<PathBuf>,
    /// Use the randomized SVD in the eNMF pipeline.
    #[arg(long)]
    randomized_svd: bool,
    /// Iteration cap; baselines default to 1000 when no budget or target is set.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Wall-clock budget in seconds (baselines).
    #[arg(long)]
    time_budget: Option<f64>,
    /// Stop baselines once the objective reaches this value.
    #[arg(long)]
    target: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    kkt_tol: f64,
    /// Output file stem (default: data file stem).
    #[arg(long)]
    name: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitKind {
    Random,
    Nndsvd,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (1 serializes every cell for timing-sensitive runs).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct KktArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    u: PathBuf,
    #[arg(long)]
    v: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a_u: PathBuf,
    #[arg(long)]
    a_v: PathBuf,
    #[arg(long)]
    b_u: PathBuf,
    #[arg(long)]
    b_v: PathBuf,
    /// Data matrix; adds the error gap and the E/TE/NE verdict.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = enmf::analysis::DEFAULT_EPS)]
    eps: f64,
}

#[derive(Args)]
struct RotateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(short, long)]
    rank: usize,
    #[arg(long, value_enum, default_value = "admm")]
    method: RotateMethod,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    name: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RotateMethod {
    /// Orthogonal rotation.
    Admm,
    /// Rotation–scale–rotation.
    Rsr,
}

struct Style {
    color: bool,
}

impl Style {
    fn detect() -> Style {
        Style {
            color: std::env::var_os("NO_COLOR").map_or(true, |v| v.is_empty()) && std::io::stderr().is_terminal(),
        }
    }

    fn paint(&self, code: &str, text: &str) -> String {
        if self.color {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }
}

fn read_data(path: &Path) -> anyhow::Result<DenseMatrix> {
    let fmt = resolve_format(path, None)?;
    Ok(read_matrix_with(
        path,
        fmt,
        ReadOptions {
            require_nonnegative: true,
        },
    )?)
}

fn read_any(path: &Path) -> anyhow::Result<DenseMatrix> {
    Ok(read_matrix(path, resolve_format(path, None)?)?)
}

fn read_pair(u: &Path, v: &Path) -> anyhow::Result<FactorPair> {
    Ok(FactorPair::new(read_any(u)?, read_any(v)?)?)
}

fn stem_of(path: &Path, name: &Option<String>) -> String {
    name.clone().unwrap_or_else(|| {
        let s = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
        // "<id>.X.mtx" → "<id>"
        s.strip_suffix(".X").unwrap_or(s).to_string()
    })
}

fn write_factors(out: &Path, stem: &str, f: &FactorPair, fmt: MatrixFormat) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut paths = Vec::new();
    for (tag, m) in [("U", &f.u), ("V", &f.v)] {
        let p = matrix_path(out, &format!("{stem}.{tag}"), fmt);
        write_matrix(m, &p, fmt)?;
        paths.push(p);
    }
    Ok(paths)
}

fn write_json(path: &Path, value: &Value) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn generate(cli: &Cli, args: &GenerateArgs, style: &Style) -> anyhow::Result<Value> {
    let seed = RngSeed(cli.seed.unwrap_or(0));
    let specs: Vec<DatasetSpec> = match (&args.config, &args.kind) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let value: Value = serde_json::from_str(&text).map_err(enmf::Error::from)?;
            let mut specs: Vec<DatasetSpec> = if value.is_array() {
                serde_json::from_value(value).map_err(enmf::Error::from)?
            } else {
                vec![serde_json::from_value(value).map_err(enmf::Error::from)?]
            };
            if let Some(s) = cli.seed {
                for spec in &mut specs {
                    match &mut spec.kind {
                        DatasetKind::Exact { seed, .. } | DatasetKind::DenseSnr { seed, .. } => *seed = RngSeed(s),
                        DatasetKind::File { .. } => {}
                    }
                }
            }
            specs
        }
        (None, Some(GenerateKind::Exact { n, m, r, sparsity, id })) => vec![DatasetSpec {
            id: id.clone().unwrap_or_else(|| format!("exact_{n}x{m}_r{r}_s{sparsity}")),
            kind: DatasetKind::Exact {
                n: *n,
                m: *m,
                r: *r,
                sparsity: *sparsity,
                seed,
            },
        }],
        (None, Some(GenerateKind::DenseSnr { n, k, m, snr_db, id })) => {
            let db: SnrDb = serde_json::from_value(parse_snr(snr_db)?).map_err(enmf::Error::from)?;
            vec![DatasetSpec {
                id: id.clone().unwrap_or_else(|| format!("snr_{n}x{m}_k{k}_{snr_db}db")),
                kind: DatasetKind::DenseSnr {
                    n: *n,
                    k: *k,
                    m: *m,
                    snr_db: db,
                    seed,
                },
            }]
        }
        (None, None) => bail!(enmf::Error::InvalidArgument(
            "generate needs --config or a dataset kind (exact, dense-snr)".into()
        )),
    };
    let mut manifests = Vec::new();
    for spec in &specs {
        let data = spec.materialize()?;
        let manifest = data.write(&cli.out, cli.format)?;
        eprintln!("{} {} ({}×{})", style.paint("32", "wrote"), manifest.id, manifest.rows, manifest.cols);
        manifests.push(serde_json::to_value(&manifest)?);
    }
    Ok(Value::Array(manifests))
}

fn parse_snr(text: &str) -> anyhow::Result<Value> {
    if text.eq_ignore_ascii_case("inf") {
        return Ok(Value::from("inf"));
    }
    let v: f64 = text
        .parse()
        .map_err(|_| enmf::Error::InvalidArgument(format!("SNR must be a number or inf, got '{text}'")))?;
    Ok(json!(v))
}

fn factorize(cli: &Cli, args: &FactorizeArgs, style: &Style) -> anyhow::Result<Value> {
    let algorithm: Option<Algorithm> = match args.algorithm.as_str() {
        "enmf" => None,
        name => Some(name.parse()?),
    };
    let x = read_data(&args.data)?;
    let mask = match &args.mask {
        Some(p) => Some(ObservationMask::from_matrix(&read_any(p)?)?),
        None => None,
    };
    let stem = stem_of(&args.data, &args.name);
    let seed = RngSeed(cli.seed.unwrap_or(0));
    let clock = Instant::now();

    let (factors, trace, mut summary) = if let Some(algorithm) = algorithm {
        let stop = StopCriteria {
            max_iters: args.max_iters.or(if args.time_budget.is_none() && args.target.is_none() {
                Some(1000)
            } else {
                None
            }),
            time_budget_s: args.time_budget,
            error_target: args.target,
            kkt_tol: Some(args.kkt_tol),
            stagnation_iters: Some(STAGNATION_ITERS),
        };
        let init = match args.init {
            InitKind::Random => InitStrategy::Random(seed),
            InitKind::Nndsvd => InitStrategy::Nndsvd,
        };
        let out = match &mask {
            Some(m) if algorithm == Algorithm::Mult => {
                let start = init.build(&m.zero_fill(&x), args.rank)?;
                masked_mult(&x, m, start, &stop, clock)?
            }
            Some(_) => bail!(enmf::Error::InvalidArgument(format!(
                "--mask is supported by enmf and mult only, not {}",
                algorithm.name()
            ))),
            None => solve(&x, args.rank, &SolverConfig::new(algorithm, init.clone(), stop))?,
        };
        for w in &out.warnings {
            eprintln!("{} {w}", style.paint("33", "warning:"));
        }
        let summary = json!({
            "algorithm": algorithm.name(),
            "init": init.label(),
            "final_objective": out.objective,
            "iterations": out.iterations,
            "termination": out.termination,
            "kkt": out.kkt,
            "kkt_satisfied": out.kkt.map(|k| k.satisfied(args.kkt_tol)),
            "runtime_s": clock.elapsed().as_secs_f64(),
        });
        (out.factors, out.trace, summary)
    } else {
        let mut map = match &args.pipeline {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str::<serde_json::Map<String, Value>>(&text).map_err(enmf::Error::from)?
            }
            None => serde_json::Map::new(),
        };
        map.insert("r".into(), Value::from(args.rank));
        let mut cfg: PipelineConfig = serde_json::from_value(Value::Object(map)).map_err(enmf::Error::from)?;
        if args.randomized_svd {
            cfg.svd = SvdMethod::Randomized(RandomizedSvdConfig {
                seed,
                ..Default::default()
            });
        }
        if let Some(k) = args.max_iters {
            cfg.descent_stop.max_iters = k;
        }
        cfg.descent_stop.kkt_tol = args.kkt_tol;
        let out = match &mask {
            Some(m) => enmc(&x, m, &cfg)?,
            None => run_enmf(&x, &cfg)?,
        };
        for w in &out.warnings {
            eprintln!("{} {w}", style.paint("33", "warning:"));
        }
        let summary = json!({
            "algorithm": if mask.is_some() { "enmc" } else { "enmf" },
            "final_objective": out.final_objective,
            "svd_residual": out.svd_residual,
            "rotated_objective": out.rotated_objective,
            "feasible_objective": out.feasible_objective,
            "one_shot": out.one_shot,
            "rotation_iterations": out.rotation.iterations,
            "descent_iterations": out.descent_iterations,
            "termination": out.descent_termination,
            "kkt": out.kkt,
            "kkt_satisfied": out.kkt.satisfied(args.kkt_tol),
            "timings": out.timings,
        });
        (out.factors, out.trace, summary)
    };

    let files = write_factors(&cli.out, &stem, &factors, cli.format)?;
    let trace_path = cli.out.join(format!("{stem}.trace.csv"));
    write_trace(&trace, &trace_path)?;
    let summary_path = cli.out.join(format!("{stem}.summary.json"));
    summary["files"] = json!({ "u": files[0], "v": files[1], "trace": trace_path });
    write_json(&summary_path, &summary)?;
    eprintln!("{} {}", style.paint("32", "wrote"), summary_path.display());
    Ok(summary)
}

fn benchmark(cli: &Cli, args: &BenchmarkArgs, style: &Style) -> anyhow::Result<Value> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg: BenchmarkConfig = serde_json::from_str(&text).map_err(enmf::Error::from)?;
    if let Some(s) = cli.seed {
        cfg.seed = RngSeed(s);
    }
    if let Some(t) = args.threads {
        cfg.options.threads = t;
    }
    let cells = run_benchmark(&cfg)?;
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let files = emit_reports(&cells, &cli.out)?;
    let failed = cells.iter().filter(|c| c.record.error.is_some()).count();
    if failed > 0 {
        eprintln!("{} {failed} cells aborted; see records", style.paint("33", "warning:"));
    }
    eprintln!("{} {} records", style.paint("32", "wrote"), cells.len());
    Ok(json!({
        "records": files.records,
        "summary": files.summary,
        "traces": files.traces.len(),
        "cells": cells.len(),
        "aborted": failed,
    }))
}

fn kkt(args: &KktArgs) -> anyhow::Result<Value> {
    let x = read_data(&args.data)?;
    let f = read_pair(&args.u, &args.v)?;
    let k = kkt_residuals(&x, &f)?;
    let mut v = serde_json::to_value(k)?;
    v["satisfied"] = json!(k.satisfied(args.tol));
    v["tol"] = json!(args.tol);
    Ok(v)
}

fn compare(args: &CompareArgs) -> anyhow::Result<Value> {
    let a = read_pair(&args.a_u, &args.a_v)?;
    let b = read_pair(&args.b_u, &args.b_v)?;
    let report = match &args.data {
        Some(p) => {
            let x = read_data(p)?;
            compare_factorizations(&x, &a, &b, args.eps, &ClassifyTolerances::for_data_norm(x.frobenius_norm()))?
        }
        None => permutation_equivalence(&a, &b, args.eps)?,
    };
    let t = generalized_transform(&a, &b)?;
    let mut v = serde_json::to_value(&report)?;
    v["transform"] = json!({
        "delta_u": t.delta_u,
        "delta_v": t.delta_v,
        "lambda": t.lambda,
        "rank_deficient": t.rank_deficient,
    });
    Ok(v)
}

fn rotate(cli: &Cli, args: &RotateArgs, style: &Style) -> anyhow::Result<Value> {
    let x = read_data(&args.data)?;
    let svd = truncated_svd(&x, args.rank)?;
    let start = svd.factors();
    let mut cfg = RotationConfig::default();
    if let Some(rho) = args.rho {
        cfg.rho = rho;
    }
    let stem = stem_of(&args.data, &args.name);
    let (rotated, mut v) = match args.method {
        RotateMethod::Admm => {
            if let Some(k) = args.max_iters {
                cfg.max_iters = k;
            }
            let res = admm_rotate(&start, &cfg)?;
            (res.apply(&start), serde_json::to_value(&res)?)
        }
        RotateMethod::Rsr => {
            if let Some(k) = args.max_iters {
                cfg.rsr_max_iters = k;
            }
            let res = rsr_admm(&start, &cfg)?;
            for w in &res.warnings {
                eprintln!("{} {w}", style.paint("33", "warning:"));
            }
            (res.apply(&start), serde_json::to_value(&res)?)
        }
    };
    let files = write_factors(&cli.out, &format!("{stem}.rotated"), &rotated, cli.format)?;
    v["svd_residual"] = json!(svd.residual);
    v["files"] = json!({ "u": files[0], "v": files[1] });
    write_json(&cli.out.join(format!("{stem}.rotation.json")), &v)?;
    Ok(v)
}

/// `outer: cause: ...`, skipping causes the outer message already spells out.
fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !text.ends_with(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<enmf::Error>())
        .map_or(1, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let style = Style::detect();
    let result = match &cli.command {
        Command::Generate(a) => generate(&cli, a, &style),
        Command::Factorize(a) => factorize(&cli, a, &style),
        Command::Benchmark(a) => benchmark(&cli, a, &style),
        Command::Kkt(a) => kkt(a),
        Command::Compare(a) => compare(a),
        Command::Rotate(a) => rotate(&cli, a, &style),
    };
    match result {
        Ok(v) => {
            let text = serde_json::to_string_pretty(&v).expect("JSON values serialize");
            // a closed pipe (`| head`) is not an error worth reporting
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{} {}", style.paint("31", "error:"), describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
