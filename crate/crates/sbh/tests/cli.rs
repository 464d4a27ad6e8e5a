//! End-to-end exercises of the command-line binary: artifact layout,
//! reproducibility, the error record on failure, and loading an external
//! clinical-style CSV.

use std::fs;
use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbh::io::{load_csv, write_dataset_csv};
use sbh::sim::{generate, ModelId, SimModelSpec};

fn sbh(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sbh"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn simulate_reruns_are_byte_identical() {
    let work = tempfile::tempdir().unwrap();
    let args = ["simulate", "--model", "1", "--n", "60", "--seed", "9"];
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let dir = work.path().join(name);
        let output = sbh(&args, &dir);
        assert!(output.status.success());
        runs.push(dir);
    }
    for file in ["dataset.csv", "truth.json", "result.json"] {
        let a = fs::read(runs[0].join(file)).unwrap();
        let b = fs::read(runs[1].join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical-seed reruns");
    }
}

#[test]
fn fit_reads_a_clinical_style_csv() {
    // A cohort-study shape: follow-up time, event status, then a mix of
    // continuous and binary covariates.
    let mut csv = String::from("time,status,Age,IDU,Race,CD4\n");
    let mut r = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..80 {
        let age = r.gen_range(20..60);
        let idu = u8::from(r.gen_bool(0.3));
        let race = u8::from(r.gen_bool(0.5));
        let cd4: f64 = r.gen_range(0.05..1.2);
        let risk = 0.5 + 2.0 * f64::from(idu) - cd4;
        let t = -r.gen::<f64>().max(1e-12).ln() / risk.exp() * 40.0;
        let c = r.gen_range(5.0..60.0);
        let status = u8::from(t <= c);
        let time = t.min(c);
        csv.push_str(&format!("{time},{status},{age},{idu},{race},{cd4}\n"));
    }
    let work = tempfile::tempdir().unwrap();
    let input = work.path().join("cohort.csv");
    fs::write(&input, csv).unwrap();

    let out = work.path().join("fit");
    let output = sbh(
        &["fit", "--input", input.to_str().unwrap(), "--M", "1"],
        &out,
    );
    assert!(
        output.status.success(),
        "fit failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "fit");
    assert_eq!(
        report["data"]["covariate_names"],
        serde_json::json!(["Age", "IDU", "Race", "CD4"])
    );
    assert_eq!(report["fit"]["boxes"].as_array().unwrap().len(), 1);

    // One requested box, one conjunctive rule block: a header comment and a
    // single `&`-joined condition line.
    let rules = fs::read_to_string(out.join("rules.txt")).unwrap();
    let lines: Vec<&str> = rules.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(lines.len(), 2, "expected one rule block, got: {rules}");
    assert!(lines[0].starts_with("# box 1"));
    assert!(lines[1].contains(">=") || lines[1].contains("<="));
}

#[test]
fn cv_report_has_the_stated_schema() {
    let work = tempfile::tempdir().unwrap();
    let out = work.path().join("cv");
    let output = sbh(
        &[
            "cv", "--model", "1", "--n", "80", "--K", "3", "--B", "2", "--seed", "3",
        ],
        &out,
    );
    assert!(output.status.success());

    for file in [
        "result.json",
        "profile.csv",
        "trajectory.csv",
        "traces.csv",
        "km_curves.csv",
        "rules.txt",
    ] {
        assert!(out.join(file).exists(), "{file} missing");
    }

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    for key in ["schema_version", "command", "seed", "config", "data", "cv"] {
        assert!(!report[key].is_null(), "result.json lacks {key}");
    }
    let cv = &report["cv"];
    for key in [
        "technique",
        "length",
        "optimal_length",
        "steps",
        "boxes",
        "rule",
        "optimal_membership",
        "replicate_lengths",
        "usage",
    ] {
        assert!(!cv[key].is_null(), "cv report lacks {key}");
    }
    let length = cv["length"].as_u64().unwrap() as usize;
    assert_eq!(cv["steps"].as_array().unwrap().len(), length + 1);
    let optimal = cv["optimal_length"].as_u64().unwrap() as usize;
    assert!((1..=length).contains(&optimal));
}

#[test]
fn failing_run_exits_nonzero_with_an_error_record() {
    let work = tempfile::tempdir().unwrap();
    let out = work.path().join("broken");
    let output = sbh(&["fit", "--input", "/no/such/file.csv"], &out);
    assert!(!output.status.success());

    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert!(record["schema_version"].is_string());
    assert!(record["error"].is_string(), "missing machine-readable code");
    assert!(record["message"].is_string());
    assert!(out.join("result.json").exists() == false);
}

#[test]
fn dataset_csv_round_trips_exactly() {
    let (data, _) = generate(&SimModelSpec::defaults(ModelId::M2, 31)).unwrap();
    let work = tempfile::tempdir().unwrap();
    let path = work.path().join("dataset.csv");
    write_dataset_csv(&path, &data).unwrap();
    let back = load_csv(&path).unwrap();

    assert_eq!(back.n(), data.n());
    assert_eq!(back.p(), data.p());
    assert_eq!(back.names(), data.names());
    for i in 0..data.n() {
        assert!((back.times()[i] - data.times()[i]).abs() < 1e-12);
        assert_eq!(back.times()[i], data.times()[i], "time {i} not bit-exact");
        assert_eq!(back.events()[i], data.events()[i]);
        for j in 0..data.p() {
            assert_eq!(back.value(i, j), data.value(i, j), "covariate ({i},{j})");
        }
    }
}
