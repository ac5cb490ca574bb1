//! End-to-end CLI runs: artifacts, exit codes, and config reproducibility.

use std::fs;
use std::path::Path;

use didiv_core::cli::run;

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|_| panic!("missing {name}"))
}

#[test]
fn simulate_estimate_aggregate_flow() {
    let dir = tempfile::tempdir().unwrap();
    let sim_dir = dir.path().join("sim");
    let est_dir = dir.path().join("est");

    let code = run([
        "didiv",
        "simulate",
        "--dgp",
        "builtin:staggered",
        "--n",
        "3000",
        "--seed",
        "7",
        "--out",
        sim_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let data_csv = sim_dir.join("data.csv");
    assert!(data_csv.exists());
    assert!(sim_dir.join("audit.csv").exists());
    assert!(sim_dir.join("spec.toml").exists());

    let code = run([
        "didiv",
        "estimate",
        "--input",
        data_csv.to_str().unwrap(),
        "--unexposed",
        "never",
        "--out",
        est_dir.to_str().unwrap(),
        "--if-dump",
    ]);
    assert_eq!(code, 0);
    let cells: serde_json::Value =
        serde_json::from_slice(&read(&est_dir, "cells.json")).unwrap();
    assert_eq!(cells.as_array().unwrap().len(), 7);
    assert!(est_dir.join("if_dump.csv").exists());

    let agg_dir = dir.path().join("agg");
    let code = run([
        "didiv",
        "aggregate",
        "--input",
        data_csv.to_str().unwrap(),
        "--unexposed",
        "never",
        "--agg",
        "sel",
        "--cohort",
        "2",
        "--out",
        agg_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let agg: serde_json::Value =
        serde_json::from_slice(&read(&agg_dir, "aggregate.json")).unwrap();
    assert!(agg["theta"].as_f64().unwrap().is_finite());
}

#[test]
fn config_rerun_reproduces_outputs_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let sim_dir = dir.path().join("sim");
    assert_eq!(
        run([
            "didiv",
            "simulate",
            "--dgp",
            "builtin:staggered",
            "--n",
            "2000",
            "--seed",
            "13",
            "--out",
            sim_dir.to_str().unwrap(),
        ]),
        0
    );
    let est_dir = dir.path().join("est");
    assert_eq!(
        run([
            "didiv",
            "aggregate",
            "--input",
            sim_dir.join("data.csv").to_str().unwrap(),
            "--unexposed",
            "never",
            "--agg",
            "overall-sel",
            "--out",
            est_dir.to_str().unwrap(),
        ]),
        0
    );

    let before: Vec<(String, Vec<u8>)> = ["run_config.json", "cells.json", "aggregate.json"]
        .iter()
        .map(|n| (n.to_string(), read(&est_dir, n)))
        .collect();

    // Re-execute from the emitted config and compare bytes.
    assert_eq!(
        run([
            "didiv",
            "--config",
            est_dir.join("run_config.json").to_str().unwrap(),
        ]),
        0
    );
    for (name, bytes) in before {
        assert_eq!(read(&est_dir, &name), bytes, "{name} changed across rerun");
    }

    // The simulate step is reproducible too.
    let sim_bytes = read(&sim_dir, "data.csv");
    assert_eq!(
        run([
            "didiv",
            "--config",
            sim_dir.join("run_config.json").to_str().unwrap(),
        ]),
        0
    );
    assert_eq!(read(&sim_dir, "data.csv"), sim_bytes);
}

#[test]
fn decompose_rejects_multi_cohort_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let sim_dir = dir.path().join("sim");
    assert_eq!(
        run([
            "didiv",
            "simulate",
            "--dgp",
            "builtin:staggered", // three cohorts incl. never
            "--n",
            "1000",
            "--seed",
            "3",
            "--out",
            sim_dir.to_str().unwrap(),
        ]),
        0
    );
    let code = run([
        "didiv",
        "decompose",
        "--input",
        sim_dir.join("data.csv").to_str().unwrap(),
        "--unexposed",
        "never",
        "--out",
        dir.path().join("dec").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn decompose_happy_path_on_two_cohorts() {
    let dir = tempfile::tempdir().unwrap();
    let sim_dir = dir.path().join("sim");
    assert_eq!(
        run([
            "didiv",
            "simulate",
            "--dgp",
            "builtin:twfeiv-bias",
            "--n",
            "4000",
            "--seed",
            "5",
            "--out",
            sim_dir.to_str().unwrap(),
        ]),
        0
    );
    let dec_dir = dir.path().join("dec");
    let code = run([
        "didiv",
        "decompose",
        "--input",
        sim_dir.join("data.csv").to_str().unwrap(),
        "--unexposed",
        "last",
        "--out",
        dec_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value =
        serde_json::from_slice(&read(&dec_dir, "decompose.json")).unwrap();
    assert!(report["identity_residual"].as_f64().unwrap().abs() < 1e-8);
    assert!(dec_dir.join("decompose.csv").exists());
}

#[test]
fn validate_and_pretrend_and_oracle_flows() {
    let dir = tempfile::tempdir().unwrap();
    let sim_dir = dir.path().join("sim");
    assert_eq!(
        run([
            "didiv",
            "simulate",
            "--dgp",
            "builtin:twfeiv-bias",
            "--n",
            "2000",
            "--seed",
            "11",
            "--out",
            sim_dir.to_str().unwrap(),
        ]),
        0
    );
    let val_dir = dir.path().join("val");
    assert_eq!(
        run([
            "didiv",
            "validate",
            "--input",
            sim_dir.join("data.csv").to_str().unwrap(),
            "--unexposed",
            "last",
            "--out",
            val_dir.to_str().unwrap(),
        ]),
        0
    );
    let report: serde_json::Value =
        serde_json::from_slice(&read(&val_dir, "validation.json")).unwrap();
    assert!(report["violations"].as_array().unwrap().is_empty());

    // Pre-periods exist for cohort 3 of the staggered builtin.
    let stag_dir = dir.path().join("stag");
    assert_eq!(
        run([
            "didiv",
            "simulate",
            "--dgp",
            "builtin:staggered",
            "--n",
            "2000",
            "--seed",
            "12",
            "--out",
            stag_dir.to_str().unwrap(),
        ]),
        0
    );
    let pre_dir = dir.path().join("pre");
    assert_eq!(
        run([
            "didiv",
            "pretrend",
            "--input",
            stag_dir.join("data.csv").to_str().unwrap(),
            "--unexposed",
            "never",
            "--max-lead",
            "2",
            "--out",
            pre_dir.to_str().unwrap(),
        ]),
        0
    );
    assert!(pre_dir.join("pretrend.json").exists());
    assert!(pre_dir.join("pretrend.csv").exists());

    let orc_dir = dir.path().join("orc");
    assert_eq!(
        run([
            "didiv",
            "oracle",
            "--dgp",
            sim_dir.join("spec.toml").to_str().unwrap(),
            "--out",
            orc_dir.to_str().unwrap(),
        ]),
        0
    );
    let oracle: serde_json::Value =
        serde_json::from_slice(&read(&orc_dir, "oracle.json")).unwrap();
    assert!(oracle["staggered"]["beta_iv"].as_f64().is_some());
}
