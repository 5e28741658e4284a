#![allow(clippy::field_reassign_with_default)]

use std::path::Path;
use std::process::Command;

use countquant::config::RunConfig;
use countquant::io::{read_rows, write_dataset, CurveRow};
use countquant::manifest::{RunManifest, RunStatus};
use countquant::pipeline::{curve_file, Pipeline, Stage, PROPOSED};
use countquant::report::report;
use countquant_core::model::Dataset;
use countquant_core::sim::gen_setting2;
use nalgebra::DMatrix;

fn small(dir: &Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.output_dir = dir.to_path_buf();
    c.seed = 3;
    c.simulate.n = 60;
    c.schedule.burn_in = 30;
    c.schedule.iterations = 100;
    c.schedule.thin = 10;
    c.schedule.chains = 1;
    c.baseline.bootstrap = 5;
    c.baseline.n_jitters = 3;
    c.validate().unwrap();
    c
}

#[test]
fn failing_stage_leaves_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(small(dir.path()));
    // compare needs the fit outputs
    let err = p
        .run("run", &[Stage::Simulate, Stage::Compare])
        .unwrap_err();
    let m = RunManifest::load(dir.path()).unwrap();
    match &m.status {
        RunStatus::Partial {
            failed_stage,
            error,
        } => {
            assert_eq!(failed_stage, "compare");
            assert_eq!(error, &err.to_string());
        }
        s => panic!("status {s:?}"),
    }
    assert!(m.stage("simulate").is_some() && m.stage("compare").is_none());
    assert!(m.missing_artifacts(dir.path()).is_empty());
    let r = report(dir.path()).unwrap();
    assert!(matches!(r.status, RunStatus::Partial { .. }));

    // resuming completes the run and keeps the simulation record
    let m = p
        .run(
            "run",
            &[
                Stage::Fit,
                Stage::Quantile,
                Stage::Regress,
                Stage::Baseline,
                Stage::Compare,
            ],
        )
        .unwrap();
    assert_eq!(m.status, RunStatus::Complete);
    assert_eq!(m.stages.len(), 6);
    assert!(report(dir.path()).unwrap().comparison.is_some());
}

#[test]
fn report_rejects_missing_empty_or_altered_manifests() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(report(dir.path()).unwrap_err().exit_code(), 4);

    let c = small(dir.path());
    RunManifest::new("run", &c).write(dir.path()).unwrap();
    assert!(report(dir.path()).is_err());

    let p = Pipeline::new(c);
    p.run("simulate", &[Stage::Simulate]).unwrap();
    assert!(report(dir.path()).is_ok());
    std::fs::write(dir.path().join("data.csv"), "y,x1\n1,0.5\n").unwrap();
    let msg = report(dir.path()).unwrap_err().to_string();
    assert!(msg.contains("data.csv"), "{msg}");
}

#[test]
fn same_seed_same_checksums_other_seed_differs() {
    let (a, b, c) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    let run = |dir: &Path, seed: u64| {
        let mut cfg = small(dir);
        cfg.seed = seed;
        cfg.schedule.chains = 2;
        let p = Pipeline::new(cfg);
        p.run("run", &p.full_stages()).unwrap().checksums()
    };
    let first = run(a.path(), 3);
    assert_eq!(first, run(b.path(), 3));
    assert_ne!(first, run(c.path(), 4));
}

#[test]
fn prior_only_clusters_follow_the_prior() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.simulate.n = 1000;
    c.sampler.prior_only = true;
    c.schedule.burn_in = 20;
    c.schedule.iterations = 600;
    c.schedule.thin = 2;
    c.schedule.chains = 1;
    let p = Pipeline::new(c);
    p.run("fit", &[Stage::Simulate, Stage::Fit]).unwrap();
    let k = report(dir.path()).unwrap().clusters.unwrap();
    // prior mean of K is 19.8 under the default discount and strength
    assert!((k.mean - 19.8).abs() < 4.0, "{k:?}");
}

/// Writes the input file; returns the range of the age column.
fn write_input(path: &Path) -> (f64, f64) {
    let sim = gen_setting2(80, 11).unwrap();
    let n = sim.data.n();
    let x = sim.data.x();
    let cols = DMatrix::from_fn(n, 2, |i, j| {
        if j == 0 {
            40.0 + 20.0 * x[(i, 0)]
        } else {
            (i % 7) as f64
        }
    });
    let data = Dataset::new(
        sim.data.y().to_vec(),
        cols,
        vec!["age".into(), "ward".into()],
    )
    .unwrap();
    write_dataset(path, &data).unwrap();
    let age = data.column(0);
    (
        age.iter().copied().fold(f64::MAX, f64::min),
        age.iter().copied().fold(f64::MIN, f64::max),
    )
}

#[test]
fn input_file_run_reports_original_scale() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("input.csv");
    let (amin, amax) = write_input(&input);
    let mut c = small(&dir.path().join("out"));
    c.data.input = Some(input);
    c.data.covariates = vec!["age".into()];
    c.data.exclude_rows = vec![1, 5];
    let p = Pipeline::new(c);
    let stages = p.full_stages();
    assert!(!stages.contains(&Stage::Simulate) && !stages.contains(&Stage::Compare));
    p.run("run", &stages).unwrap();
    let rows: Vec<CurveRow> = read_rows(&p.dir().join(curve_file(PROPOSED, 0.5))).unwrap();
    assert!(rows
        .iter()
        .all(|r| r.covariate == "age" && r.lower.is_some()));
    let (lo, hi) = rows.iter().fold((f64::MAX, f64::MIN), |(a, b), r| {
        (a.min(r.grid_x), b.max(r.grid_x))
    });
    assert!(
        lo >= amin - 1e-9 && hi <= amax + 1e-9,
        "grid [{lo}, {hi}] outside [{amin}, {amax}]"
    );
    assert!(hi - lo > 0.5 * (amax - amin));
    let r = report(p.dir()).unwrap();
    assert!(r.comparison.is_none() && !r.curves.is_empty());
}

fn countquant(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_countquant"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let missing = countquant(&[
        "fit",
        "--input",
        "/nonexistent/input.csv",
        "--output-dir",
        out,
    ]);
    assert_eq!(
        missing.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&missing.stderr)
    );

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "y,age\n1,30\n2.5,31\n").unwrap();
    let malformed = countquant(&["fit", "--input", bad.to_str().unwrap(), "--output-dir", out]);
    assert_eq!(malformed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&malformed.stderr).contains("2.5"));

    let tau = countquant(&["config", "--taus", "0.5,1.5"]);
    assert_eq!(tau.status.code(), Some(2));

    let cfg = countquant(&[
        "config",
        "--seed",
        "9",
        "--discount",
        "0.5",
        "--strength",
        "-0.3",
    ]);
    assert!(cfg.status.success());
    let parsed = RunConfig::from_toml(&String::from_utf8(cfg.stdout).unwrap()).unwrap();
    assert_eq!(parsed.seed, 9);

    // the failed fit left a manifest without stages
    assert_eq!(
        countquant(&["report", "--output-dir", out]).status.code(),
        Some(2)
    );
    let fresh = dir.path().join("fresh");
    let no_report = countquant(&["report", "--output-dir", fresh.to_str().unwrap()]);
    assert_eq!(no_report.status.code(), Some(4));
}
