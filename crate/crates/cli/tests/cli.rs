use std::path::Path;
use std::process::{Command, Output};

use subsidy_cli::manifest::read_manifest;
use subsidy_cli::panel_csv::{panel_to_bytes, read_panel_file};
use tempfile::TempDir;

fn subsidy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subsidy")).args(args).env_remove("SUBSIDY_THREADS").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = subsidy(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(args: &[&str], code: i32) -> String {
    let out = subsidy(args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stderr).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const THREE_HCP: &str = "\
hcp_id,period,ln_price,ln_subsidy,ln_netcost,s2,s2c,ln_speed,hcp_type,service_type,state,n_requests,speed_mbps
a,0,10,10,10,0,0,1,clinic,fiber,AK,1,10
a,1,11,11,11,0,0,1,clinic,fiber,AK,1,10
b,0,10,10,10,0,0,1,clinic,fiber,AK,1,10
b,1,9.5,9.5,9.5,1,0,1,clinic,fiber,AK,1,10
c,0,10,10,10,0,0,1,clinic,fiber,AK,1,10
c,1,12,12,12,0,1,1,clinic,fiber,AK,1,10
";

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn minimal_config_gives_six_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "c.toml", "seed = 11\n[scenario]\nn_hcps = 3\noutcome_noise = 0.0\n");
    let out = tmp.path().join("sim");
    ok(&["simulate", "--config", &cfg, "--out", p(&out)]);
    let rows = read_panel_file(&out.join("panel.csv")).unwrap();
    assert_eq!(rows.len(), 6);
    let m = read_manifest(&out).unwrap();
    assert_eq!(m.seed, Some(11));
    for f in ["panel.csv", "ground_truth.json", "switching.csv", "config.toml"] {
        assert!(m.outputs.contains_key(f), "{f}");
    }
}

#[test]
fn simulate_twice_gives_identical_digests() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["simulate", "--seed", "99", "--out", p(&a)]);
    ok(&["simulate", "--seed", "99", "--out", p(&b)]);
    assert_eq!(read_manifest(&a).unwrap().outputs, read_manifest(&b).unwrap().outputs);
    let c = tmp.path().join("c");
    ok(&["simulate", "--seed", "100", "--out", p(&c)]);
    assert_ne!(read_manifest(&a).unwrap().outputs["panel.csv"], read_manifest(&c).unwrap().outputs["panel.csv"]);
}

#[test]
fn default_panel_round_trips_byte_for_byte() {
    let tmp = TempDir::new().unwrap();
    ok(&["simulate", "--seed", "5", "--out", p(tmp.path())]);
    let path = tmp.path().join("panel.csv");
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(panel_to_bytes(&read_panel_file(&path).unwrap()).unwrap(), bytes);
}

#[test]
fn config_snapshot_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    ok(&["simulate", "--seed", "8", "--out", p(&a)]);
    let b = tmp.path().join("b");
    ok(&["simulate", "--config", p(&a.join("config.toml")), "--out", p(&b)]);
    assert_eq!(read_manifest(&a).unwrap().outputs, read_manifest(&b).unwrap().outputs);
}

#[test]
fn config_errors_name_field_and_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "c.toml", "seed = 1\n[scenario]\nn_hcps = 3\nbogus = 1\n");
    let err = fails_with(&["simulate", "--config", &cfg, "--out", p(tmp.path())], 2);
    assert!(err.contains("bogus") && err.contains("line 4"), "{err}");
    fails_with(&["simulate", "--out", p(tmp.path())], 2);
    let missing = tmp.path().join("nope.toml");
    fails_with(&["simulate", "--config", p(&missing), "--out", p(tmp.path())], 2);
}

#[test]
fn twfe_on_three_hcps_prints_minus_one_and_a_half() {
    let tmp = TempDir::new().unwrap();
    let panel = write(&tmp, "p.csv", THREE_HCP);
    let out = tmp.path().join("est");
    let table =
        ok(&["estimate", "--panel", &panel, "--method", "twfe-cont", "--outcome", "ln_price", "--out", p(&out)]);
    assert!(table.contains("-1.5000"), "{table}");
    let tsv = std::fs::read_to_string(out.join("estimates.tsv")).unwrap();
    let line = tsv.lines().find(|l| l.starts_with("twfe-cont\tln_price\tS2\t")).unwrap();
    let s2: f64 = line.split('\t').nth(3).unwrap().parse().unwrap();
    assert!((s2 + 1.5).abs() < 1e-12, "{line}");
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("estimates.json")).unwrap()).unwrap();
    assert_eq!(json[0]["n"], 6);
}

#[test]
fn dml_with_too_many_folds_exits_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "c.toml", "seed = 3\n[scenario]\nn_hcps = 15\n");
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", &cfg, "--out", p(&sim)]);
    let panel = sim.join("panel.csv");
    let err = fails_with(
        &["estimate", "--panel", p(&panel), "--method", "dml", "--k-folds", "10", "--out", p(tmp.path())],
        2,
    );
    assert!(err.contains("10-fold"), "{err}");
}

#[test]
fn unknown_columns_are_schema_violations() {
    let tmp = TempDir::new().unwrap();
    let panel = write(&tmp, "p.csv", THREE_HCP);
    let err = fails_with(&["estimate", "--panel", &panel, "--covariates", "bandwidth", "--out", p(tmp.path())], 2);
    assert!(err.contains("bandwidth"), "{err}");
    let renamed = write(&tmp, "q.csv", &THREE_HCP.replacen("speed_mbps", "bandwidth", 1));
    let err = fails_with(&["estimate", "--panel", &renamed, "--out", p(tmp.path())], 2);
    assert!(err.contains("bandwidth"), "{err}");
    let bad_share = write(&tmp, "r.csv", &THREE_HCP.replacen("b,1,9.5,9.5,9.5,1,", "b,1,9.5,9.5,9.5,1.5,", 1));
    let err = fails_with(&["estimate", "--panel", &bad_share, "--out", p(tmp.path())], 2);
    assert!(err.contains("row 4") && err.contains("s2"), "{err}");
}

#[test]
fn manski_curve_passes_through_did() {
    let tmp = TempDir::new().unwrap();
    ok(&["simulate", "--seed", "21", "--out", p(tmp.path())]);
    let out = tmp.path().join("diag");
    let panel = tmp.path().join("panel.csv");
    ok(&["diagnose", "--panel", p(&panel), "--battery", "manski", "--g-grid", "0:2:0.5", "--out", p(&out)]);
    let curve: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manski_P2_ln_price.json")).unwrap()).unwrap();
    let did = curve["beta_did"].as_f64().unwrap();
    let at_one = curve["points"].as_array().unwrap().iter().find(|pt| pt["g"] == 1.0).unwrap();
    assert_eq!(at_one["beta"].as_f64().unwrap(), did);
    let tsv = std::fs::read_to_string(out.join("manski_P2_ln_price.tsv")).unwrap();
    assert_eq!(tsv.lines().next().unwrap(), "x\tfit\tlo\thi");
    assert_eq!(tsv.lines().count(), 6);
}

#[test]
fn oster_direct_inputs() {
    let tmp = TempDir::new().unwrap();
    let text = ok(&["diagnose", "--oster-inputs", "-0.261,-1.249,0.043,0.387,0.502", "--out", p(tmp.path())]);
    assert!(text.contains("delta -3.78"), "{text}");
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("oster.json")).unwrap()).unwrap();
    let delta = v[0]["report"]["delta"].as_f64().unwrap();
    assert!((delta + 3.78).abs() < 0.1, "{delta}");
}

#[test]
fn full_battery_on_default_panel() {
    let tmp = TempDir::new().unwrap();
    ok(&["simulate", "--seed", "4", "--out", p(tmp.path())]);
    let panel = tmp.path().join("panel.csv");
    let out = tmp.path().join("diag");
    ok(&["diagnose", "--panel", p(&panel), "--out", p(&out)]);
    let m = read_manifest(&out).unwrap();
    for f in ["oster.json", "cooks.json", "support.json", "forms.json", "forms.tsv"] {
        assert!(m.outputs.contains_key(f), "{f}");
    }
}

#[test]
fn hump_diagnostic_reads_consortium_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "c.toml", "seed = 2\n[scenario]\nn_hcps = 40\n[hump]\nn_consortia = 125\n");
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", &cfg, "--out", p(&sim)]);
    let out = tmp.path().join("diag");
    let text = ok(&["diagnose", "--consortia", p(&sim.join("consortia.csv")), "--out", p(&out)]);
    assert!(text.contains("InvertedU"), "{text}");
    assert!(out.join("hump_curve.tsv").exists());
}

#[test]
fn unknown_scenario_and_bad_flags() {
    let tmp = TempDir::new().unwrap();
    let err = fails_with(&["replicate", "nope", "--seed", "1", "--out", p(tmp.path())], 2);
    assert!(err.contains("dominance-sweep"), "{err}");
    fails_with(&["estimate", "--panel", "x.csv", "--method", "ols", "--out", p(tmp.path())], 2);
    fails_with(&["frobnicate"], 2);
    let out = Command::new(env!("CARGO_BIN_EXE_subsidy"))
        .args(["simulate", "--seed", "1", "--out", p(tmp.path())])
        .env("SUBSIDY_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replicate_functional_form_passes() {
    let tmp = TempDir::new().unwrap();
    let text = ok(&["replicate", "functional-form", "--seed", "20240601", "--out", p(tmp.path())]);
    assert!(!text.contains("FAIL"), "{text}");
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["checks"].as_array().unwrap().len(), 3);
}
