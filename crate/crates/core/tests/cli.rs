use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use meshqos::metrics::DATASET_HEADER;

fn meshqos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshqos"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_small(dir: &Path, scenario: &str, seed: &str) -> Output {
    meshqos(&[
        "run",
        "--scenario",
        scenario,
        "--packets",
        "60",
        "--seed",
        seed,
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn run_writes_dataset_kpis_and_ecdfs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_small(tmp.path(), "experiment1", "42");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(tmp.path().join("dataset.csv").is_file());
    assert!(tmp.path().join("kpis.json").is_file());
    for p in 1..=3 {
        let f = tmp.path().join(format!("ecdf_test1_p{p}.csv"));
        let text = fs::read_to_string(&f).unwrap();
        assert!(text.starts_with("pdt_ms,fraction\n"));
        assert!(text.trim_end().ends_with(",1"), "{text}");
    }
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("Priority 3"), "{stdout}");
    assert!(stdout.contains("PDR"));
}

#[test]
fn same_seed_gives_identical_datasets() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_small(a.path(), "experiment2", "42").status.success());
    assert!(run_small(b.path(), "experiment2", "42").status.success());
    let da = fs::read(a.path().join("dataset.csv")).unwrap();
    let db = fs::read(b.path().join("dataset.csv")).unwrap();
    assert_eq!(da, db);
}

#[test]
fn several_runs_get_one_directory_each() {
    let tmp = tempfile::tempdir().unwrap();
    let out = meshqos(&[
        "run",
        "--scenario",
        "experiment1",
        "--packets",
        "20",
        "--runs",
        "2",
        "--seed",
        "10",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(tmp.path().join("seed-10/dataset.csv").is_file());
    assert!(tmp.path().join("seed-11/dataset.csv").is_file());
}

#[test]
fn missing_scenario_file_fails() {
    let out = meshqos(&["run", "--scenario", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("/nonexistent/scenario.toml"));
}

#[test]
fn validate_builtin_and_file() {
    let out = meshqos(&["validate", "experiment1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("15 nodes, 1 flows"));

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("s.toml");
    fs::write(&path, meshqos::scenario::EXPERIMENT2_TOML).unwrap();
    let out = meshqos(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn bad_tx_power_names_allowed_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("s.toml");
    let text =
        meshqos::scenario::EXPERIMENT1_TOML.replace("tx_power_dbm = -8", "tx_power_dbm = -10");
    fs::write(&path, text).unwrap();
    let out = meshqos(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("{4, 0, -8, -20, -40}"), "{err}");
}

#[test]
fn unknown_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("s.toml");
    let text =
        meshqos::scenario::EXPERIMENT1_TOML.replace("relay = true", "relay = true\nrelays = 1");
    fs::write(&path, text).unwrap();
    let out = meshqos(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("relays"), "{}", stderr(&out));
}

#[test]
fn report_reproduces_run_kpis() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_small(tmp.path(), "experiment2", "3").status.success());
    let json = tmp.path().join("again.json");
    let out = meshqos(&[
        "report",
        tmp.path().join("dataset.csv").to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(
        fs::read_to_string(json).unwrap(),
        fs::read_to_string(tmp.path().join("kpis.json")).unwrap()
    );
}

#[test]
fn report_without_priority_column_is_a_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("d.csv");
    let header: Vec<_> = DATASET_HEADER
        .iter()
        .filter(|h| **h != "Priority Class")
        .copied()
        .collect();
    fs::write(
        &path,
        format!("{}\n1,1,0,0x0091,0xC000,7,4,1,0,0\n", header.join(",")),
    )
    .unwrap();
    let out = meshqos(&["report", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Priority Class"), "{}", stderr(&out));
}

#[test]
fn report_on_hand_built_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("d.csv");
    let json = tmp.path().join("k.json");
    let rows = [
        "1010,1,0,0x0091,0xC000,7,4,1,1,1,10",
        "3020,1,1,0x0091,0xC000,7,4,1,1,3,20",
        "5000,1,2,0x0092,0xC000,5,-8,2,0,,",
    ];
    fs::write(
        &path,
        format!("{}\n{}\n", DATASET_HEADER.join(","), rows.join("\n")),
    )
    .unwrap();
    let out = meshqos(&[
        "report",
        path.to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    let c = &v["tests"][0]["classes"];
    assert_eq!(c[0]["priority"], 1);
    assert_eq!(c[0]["sent"], 2);
    assert_eq!(c[0]["delivered"], 2);
    assert_eq!(c[0]["pdr"], 1.0);
    assert_eq!(c[0]["hops_avg"], 2.0);
    assert_eq!(c[0]["pdt_avg"], 15.0);
    // Sample deviation of {10, 20}.
    assert!((c[0]["pdt_std"].as_f64().unwrap() - 50f64.sqrt()).abs() < 1e-12);
    assert_eq!(c[0]["pdt_min"], 10);
    assert_eq!(c[0]["pdt_max"], 20);
    assert_eq!(c[1]["priority"], 2);
    assert_eq!(c[1]["sent"], 1);
    assert_eq!(c[1]["delivered"], 0);
    assert_eq!(c[1]["pdr"], 0.0);
    assert!(c[1]["pdt_avg"].is_null());
    assert!(c[1]["hops_avg"].is_null());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(meshqos(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(meshqos(&["run"]).status.code(), Some(2));
    assert_eq!(meshqos(&["--help"]).status.code(), Some(0));
}
