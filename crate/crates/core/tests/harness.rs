use enmf::harness::*;
use enmf::solvers::{Algorithm, InitStrategy, Termination};
use enmf::RngSeed;

fn config(protocols: &str) -> BenchmarkConfig {
    let text = format!(
        r#"{{
            "datasets": [
                {{"id": "ex03", "kind": "exact", "n": 30, "m": 25, "r": 3, "sparsity": 0.3, "seed": 5}},
                {{"id": "ex05", "kind": "exact", "n": 30, "m": 25, "r": 3, "sparsity": 0.5, "seed": 6}}
            ],
            "ranks": [3],
            "algorithms": ["hals", "mult", "ao_admm"],
            "random_inits": 2,
            "seed": 9,
            "protocols": {protocols},
            "options": {{"threads": 2, "max_iters": 3000, "equal_error_cap_s": 30}}
        }}"#
    );
    serde_json::from_str(&text).unwrap()
}

#[test]
fn records_round_trip_through_jsonl() {
    let cells = run_benchmark(&config(r#"["equal_error"]"#)).unwrap();
    // eNMF plus 3 algorithms × (2 random + NNDSVD), per dataset
    assert_eq!(cells.len(), 2 * (1 + 9));
    let dir = tempfile::tempdir().unwrap();
    let files = emit_reports(&cells, dir.path()).unwrap();
    let back = read_records(&files.records).unwrap();
    let orig: Vec<BenchmarkRecord> = cells.iter().map(|c| c.record.clone()).collect();
    assert_eq!(back, orig);
    assert_eq!(files.traces.len(), cells.len());

    let summary = std::fs::read_to_string(&files.summary).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next().unwrap(), "dataset_id,r,protocol,metric,enmf,ao_admm,hals,mult");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2, "one row per sparsity level: {rows:?}");
    assert!(rows[0].starts_with("ex03,3,equal_error,time_to_target_s,"));
}

#[test]
fn equal_error_sweeps_are_reproducible() {
    let cfg = config(r#"["equal_error"]"#);
    let a = run_benchmark(&cfg).unwrap();
    let b = run_benchmark(&cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.record.algorithm, y.record.algorithm);
        assert_eq!(x.record.init_label, y.record.init_label);
        let (p, q) = (x.record.final_objective.unwrap(), y.record.final_objective.unwrap());
        assert!((p - q).abs() <= 1e-10 * p.max(1.0), "{p} vs {q}");
    }
}

#[test]
fn equal_time_reference_and_budgets() {
    let cells = run_benchmark(&config(r#"["equal_time"]"#)).unwrap();
    for c in &cells {
        let r = &c.record;
        let Protocol::EqualTime { budget_s } = r.protocol else {
            panic!("wrong protocol")
        };
        if r.algorithm == ENMF_LABEL {
            assert!(r.phase_timings.is_some());
            assert!((r.runtime_s - budget_s).abs() <= 1e-12);
            continue;
        }
        match r.termination {
            Termination::KktConverged => assert!(r.kkt.unwrap().satisfied(1e-6)),
            Termination::Budget => assert!(r.runtime_s >= budget_s),
            Termination::IterationCap => assert_eq!(r.iterations, 3000),
            other => panic!("unexpected termination {other:?}"),
        }
    }
    assert_eq!(
        cells.iter().filter(|c| c.record.best_over_inits).count(),
        2 * 4,
        "one best cell per algorithm (eNMF included) and dataset"
    );
}

#[test]
fn competitor_grid_crosses_algorithms_and_inits() {
    let g = competitor_grid(&[Algorithm::Hals, Algorithm::Mult], 5, true, RngSeed(1));
    assert_eq!(g.len(), 12);
    assert_eq!(g.iter().filter(|c| c.init == InitStrategy::Nndsvd).count(), 2);
    let seeds: std::collections::BTreeSet<String> = g.iter().map(|c| c.init.label()).collect();
    assert_eq!(seeds.len(), 6);
}
