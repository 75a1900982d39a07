use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::trace::ConvergenceTrace;

use super::protocol::{CellResult, ENMF_LABEL};
use super::record::{BenchmarkRecord, Protocol};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRACE_DIR: &str = "traces";
pub const TRACE_HEADER: [&str; 3] = ["wall_clock_s", "objective", "iteration"];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub traces: Vec<PathBuf>,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

pub fn write_records(records: &[BenchmarkRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<BenchmarkRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            location: format!("line {}", k + 1),
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_trace(trace: &ConvergenceTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(TRACE_HEADER).map_err(|e| csv_err(path, e))?;
    for s in trace.samples() {
        w.write_record([
            s.wall_clock_s.to_string(),
            s.objective.to_string(),
            s.iteration.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Pivot of the best-over-inits records: one row per (dataset, r, protocol), one column per
/// algorithm (eNMF first). Equal-time rows hold the final objective, equal-error rows the
/// time to reach the target (empty when never reached).
pub fn write_summary(records: &[BenchmarkRecord], path: &Path) -> Result<()> {
    let mut algorithms: Vec<String> = Vec::new();
    let mut rows: Vec<(String, usize, &'static str)> = Vec::new();
    let mut cells: BTreeMap<(String, usize, &'static str, String), String> = BTreeMap::new();
    for rec in records.iter().filter(|r| r.best_over_inits) {
        if !algorithms.contains(&rec.algorithm) {
            algorithms.push(rec.algorithm.clone());
        }
        let kind = rec.protocol.kind().name();
        let key = (rec.dataset_id.clone(), rec.r, kind);
        if !rows.contains(&key) {
            rows.push(key.clone());
        }
        let value = match rec.protocol {
            Protocol::EqualTime { .. } => rec.final_objective,
            Protocol::EqualError { .. } => rec.time_to_target_s,
        };
        cells.insert(
            (key.0, key.1, key.2, rec.algorithm.clone()),
            value.map(|v| v.to_string()).unwrap_or_default(),
        );
    }
    algorithms.sort_by_key(|a| (a != ENMF_LABEL, a.clone()));

    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["dataset_id".to_string(), "r".into(), "protocol".into(), "metric".into()];
    header.extend(algorithms.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (ds, r, kind) in rows {
        let metric = if kind == "equal_time" {
            "final_objective"
        } else {
            "time_to_target_s"
        };
        let mut row = vec![ds.clone(), r.to_string(), kind.to_string(), metric.to_string()];
        for a in &algorithms {
            row.push(
                cells
                    .get(&(ds.clone(), r, kind, a.clone()))
                    .cloned()
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `records.jsonl`, `summary.csv` and one trace CSV per cell under `out_dir`.
pub fn emit_reports(cells: &[CellResult], out_dir: &Path) -> Result<ReportFiles> {
    let trace_dir = out_dir.join(TRACE_DIR);
    fs::create_dir_all(&trace_dir).map_err(|e| Error::io(&trace_dir, e))?;
    let records: Vec<BenchmarkRecord> = cells.iter().map(|c| c.record.clone()).collect();
    let records_path = out_dir.join(RECORDS_FILE);
    write_records(&records, &records_path)?;
    let summary = out_dir.join(SUMMARY_FILE);
    write_summary(&records, &summary)?;
    let mut traces = Vec::with_capacity(cells.len());
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for c in cells {
        let base = c.trace_name();
        let n = seen.entry(base.clone()).or_insert(0);
        let name = if *n == 0 { base } else { format!("{base}_{n}") };
        *n += 1;
        let p = trace_dir.join(format!("{name}.csv"));
        write_trace(&c.trace, &p)?;
        traces.push(p);
    }
    Ok(ReportFiles {
        records: records_path,
        summary,
        traces,
    })
}
