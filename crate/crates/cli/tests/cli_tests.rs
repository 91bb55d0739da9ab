//! End-to-end tests for the config runner: JSON in, JSON/CSV out, with
//! machine-readable errors and byte-identical reruns.

use std::fs;
use std::path::{Path, PathBuf};

use tempfile::TempDir;

fn write_config(dir: &Path, name: &str, body: &serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(body).unwrap()).unwrap();
    p
}

fn out(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn capacity_run_writes_expected_json() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "cap.json",
        &serde_json::json!({
            "schema_version": 1,
            "command": "capacity",
            "channel": { "kind": "additive", "alphabet": 2 },
            "noise": { "kind": "iid", "pmf": { "alphabet": { "size": 2, "null": null }, "probs": [0.89, 0.11] } },
            "n": 1,
            "output": out(&dir, "cap_out.json")
        }),
    );
    let paths = fbchan_cli::run(&cfg).unwrap();
    assert_eq!(paths.len(), 1);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&paths[0]).unwrap()).unwrap();
    // BSC(0.11): 1 - h(0.11) = 0.50008...
    let c = v["value_per_use"].as_f64().unwrap();
    assert!((c - 0.500_084).abs() < 1e-4, "got {c}");
    assert_eq!(v["command"], "capacity");
    assert!(v["converged"].as_bool().unwrap());
}

#[test]
fn fbcapacity_exhaustive_additive_matches_nonfeedback() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "fbcap.json",
        &serde_json::json!({
            "schema_version": 1,
            "command": "fbcapacity",
            "channel": { "kind": "additive", "alphabet": 2 },
            "noise": { "kind": "iid", "pmf": { "alphabet": { "size": 2, "null": null }, "probs": [0.89, 0.11] } },
            "n": 1,
            "method": "exhaustive",
            "steps": 64,
            "output": out(&dir, "fbcap_out.json")
        }),
    );
    let paths = fbchan_cli::run(&cfg).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&paths[0]).unwrap()).unwrap();
    let c = v["value_per_use"].as_f64().unwrap();
    // memoryless: feedback does not help, grid resolution limits accuracy
    assert!((c - 0.500_084).abs() < 1e-2, "got {c}");
}

#[test]
fn decompose_reports_periodic_modes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "dec.json",
        &serde_json::json!({
            "schema_version": 1,
            "command": "decompose",
            "noise": { "kind": "periodic", "alphabet": { "size": 2, "null": null }, "cycle": [0, 1] },
            "n": 2,
            "output": out(&dir, "dec_out.json")
        }),
    );
    let paths = fbchan_cli::run(&cfg).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&paths[0]).unwrap()).unwrap();
    // period-2 cycle sampled in 2-blocks splits into gcd(2, 2) = 2 modes
    assert_eq!(v["decomposition"]["n_prime"], 2);
    assert_eq!(v["decomposition"]["modes"].as_array().unwrap().len(), 2);
}

fn nf_config(dir: &TempDir, output: &str, sweep: Option<serde_json::Value>) -> serde_json::Value {
    let mut body = serde_json::json!({
        "schema_version": 1,
        "command": "simulate-nf",
        "channel": { "kind": "additive", "alphabet": 2 },
        "noise": { "kind": "iid", "pmf": { "alphabet": { "size": 2, "null": null }, "probs": [0.89, 0.11] } },
        "n": 2,
        "l": 10,
        "rate": 0.2,
        "trials": 40,
        "epsilon": 0.3,
        "seed": 7,
        "output": out(dir, output)
    });
    if let Some(grid) = sweep {
        body["sweep"] = grid;
    }
    body
}

#[test]
fn simulate_nf_run_produces_csv_with_expected_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "nf.json", &nf_config(&dir, "nf_out.csv", None));
    let paths = fbchan_cli::run(&cfg).unwrap();
    let text = fs::read_to_string(&paths[0]).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,L,R,actual_rate,epsilon,trials,errors,pe,ci_lo,ci_hi,seed"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "2");
    assert_eq!(row[1], "10");
    assert_eq!(row[5], "40");
    let pe: f64 = row[7].parse().unwrap();
    let (lo, hi): (f64, f64) = (row[8].parse().unwrap(), row[9].parse().unwrap());
    assert!(lo <= pe && pe <= hi);
    assert!(lines.next().is_none());
}

#[test]
fn run_rejects_sweep_grid_and_sweep_requires_one() {
    let dir = TempDir::new().unwrap();
    let with_grid = write_config(
        dir.path(),
        "nf_grid.json",
        &nf_config(&dir, "nf_grid.csv", Some(serde_json::json!({ "l": [10, 20] }))),
    );
    let err = fbchan_cli::run(&with_grid).unwrap_err();
    assert_eq!(err.kind, "schema");
    assert_eq!(err.field.as_deref(), Some("sweep"));

    let without = write_config(dir.path(), "nf_plain.json", &nf_config(&dir, "nf_plain.csv", None));
    let err = fbchan_cli::sweep(&without).unwrap_err();
    assert_eq!(err.kind, "schema");
    assert_eq!(err.field.as_deref(), Some("sweep"));
}

#[test]
fn sweep_visits_grid_l_outermost() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "nf_sweep.json",
        &nf_config(
            &dir,
            "nf_sweep.csv",
            Some(serde_json::json!({ "l": [10, 20], "rate": [0.1, 0.2] })),
        ),
    );
    let paths = fbchan_cli::sweep(&cfg).unwrap();
    let text = fs::read_to_string(&paths[0]).unwrap();
    let pairs: Vec<(String, String)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].to_string())
        })
        .collect();
    let want: Vec<(String, String)> = [("10", "0.1"), ("10", "0.2"), ("20", "0.1"), ("20", "0.2")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    assert_eq!(pairs, want);
}

#[test]
fn simulate_fb_pass_through_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "fb.json",
        &serde_json::json!({
            "schema_version": 1,
            "command": "simulate-fb",
            "channel": { "kind": "additive", "alphabet": 2 },
            "noise": { "kind": "iid", "pmf": { "alphabet": { "size": 2, "null": null }, "probs": [0.89, 0.11] } },
            "n": 2,
            "l": 10,
            "rate": 0.3,
            "trials": 40,
            "epsilon": 0.3,
            "seed": 11,
            "strategy": { "kind": "pass_through" },
            "output": out(&dir, "fb_out.csv")
        }),
    );
    let paths = fbchan_cli::run(&cfg).unwrap();
    let text = fs::read_to_string(&paths[0]).unwrap();
    assert_eq!(text.lines().count(), 2);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let pe: f64 = row[7].parse().unwrap();
    assert!((0.0..=1.0).contains(&pe));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let a = write_config(dir.path(), "a.json", &nf_config(&dir, "a_out.csv", None));
    let b = write_config(dir.path(), "b.json", &nf_config(&dir, "b_out.csv", None));
    let pa = fbchan_cli::run(&a).unwrap();
    let pb = fbchan_cli::run(&b).unwrap();
    assert_eq!(fs::read(&pa[0]).unwrap(), fs::read(&pb[0]).unwrap());
}

#[test]
fn missing_field_yields_schema_error_naming_the_field() {
    let dir = TempDir::new().unwrap();
    let mut body = nf_config(&dir, "bad_out.csv", None);
    body.as_object_mut().unwrap().remove("rate");
    let cfg = write_config(dir.path(), "bad.json", &body);
    let err = fbchan_cli::run(&cfg).unwrap_err();
    assert_eq!(err.kind, "schema");
    assert!(err.message.contains("rate"), "message: {}", err.message);
}

#[test]
fn wrong_schema_version_is_rejected() {
    let dir = TempDir::new().unwrap();
    let mut body = nf_config(&dir, "v2_out.csv", None);
    body["schema_version"] = serde_json::json!(2);
    let cfg = write_config(dir.path(), "v2.json", &body);
    let err = fbchan_cli::run(&cfg).unwrap_err();
    assert_eq!(err.kind, "schema");
    assert_eq!(err.field.as_deref(), Some("schema_version"));
}

#[test]
fn invalid_pmf_surfaces_core_error_kind() {
    let dir = TempDir::new().unwrap();
    let mut body = nf_config(&dir, "pmf_out.csv", None);
    body["noise"]["pmf"]["probs"] = serde_json::json!([0.6, 0.6]);
    let cfg = write_config(dir.path(), "pmf.json", &body);
    let err = fbchan_cli::run(&cfg).unwrap_err();
    assert_eq!(err.kind, "invalid_pmf");
}

#[test]
fn plotdata_uses_l_axis_when_l_varies() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "pl.json",
        &nf_config(&dir, "pl.csv", Some(serde_json::json!({ "l": [10, 20] }))),
    );
    let csv = fbchan_cli::sweep(&cfg).unwrap().remove(0);
    let dat = fbchan_cli::plotdata(&csv).unwrap();
    assert_eq!(dat.extension().unwrap(), "dat");
    let text = fs::read_to_string(&dat).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "# L pe ci_lo ci_hi");
    assert_eq!(lines.clone().count(), 2);
    for line in lines {
        assert_eq!(line.split_whitespace().count(), 4);
    }
}

#[test]
fn plotdata_uses_rate_axis_for_single_l() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "pr.json",
        &nf_config(&dir, "pr.csv", Some(serde_json::json!({ "rate": [0.2, 0.3, 0.4] }))),
    );
    let csv = fbchan_cli::sweep(&cfg).unwrap().remove(0);
    let dat = fbchan_cli::plotdata(&csv).unwrap();
    let text = fs::read_to_string(&dat).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "# rate pe");
    assert_eq!(lines.count(), 3);
}

#[test]
fn empty_grid_yields_header_only_csv_and_plot() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "empty.json",
        &nf_config(&dir, "empty.csv", Some(serde_json::json!({ "l": [] }))),
    );
    let csv = fbchan_cli::sweep(&cfg).unwrap().remove(0);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.trim_end(), "n,L,R,actual_rate,epsilon,trials,errors,pe,ci_lo,ci_hi,seed");
    let dat = fbchan_cli::plotdata(&csv).unwrap();
    assert_eq!(fs::read_to_string(&dat).unwrap(), "# rate pe\n");
}

#[test]
fn lemma_check_state1_passes_and_reports_gaps() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "lemma.json",
        &serde_json::json!({
            "schema_version": 1,
            "command": "lemma-check",
            "lemma": "state1",
            "instances": 2,
            "seed": 3,
            "output": out(&dir, "lemma_out.json")
        }),
    );
    let paths = fbchan_cli::run(&cfg).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&paths[0]).unwrap()).unwrap();
    assert!(v["pass"].as_bool().unwrap());
    assert!(v["max_gap"].as_f64().unwrap() < 1e-4);
    assert_eq!(v["instances"].as_array().unwrap().len(), 2);
}
