use std::path::PathBuf;

use mmexit_cli::run_captured;
use mmexit_cli::table::Table;

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn model(name: &str) -> String {
    models().join(format!("{name}.toml")).display().to_string()
}

fn run(args: &[&str]) -> (i32, String, String) {
    run_captured(std::iter::once("mmexit").chain(args.iter().copied()))
}

fn table(text: &str) -> Table {
    Table::read_csv(text.as_bytes()).unwrap()
}

fn col(t: &Table, name: &str) -> usize {
    t.columns.iter().position(|c| c == name).unwrap()
}

#[test]
fn validate_reports_stationary_law() {
    let (code, out, _) = run(&["validate", "--model", &model("s1")]);
    assert_eq!(code, 0);
    assert!(out.contains("valid,[1]"), "{out}");
    let (code, out, _) = run(&["validate", "--scenario", &model("r2")]);
    assert_eq!(code, 0);
    assert!(out.contains("drift m10 = 0.5"), "{out}");
}

#[test]
fn shipped_model_files_match_presets() {
    for name in ["s1", "s2", "m2", "d2", "r1", "r2", "rm2"] {
        let (code, out, _) = run(&["preset", name]);
        assert_eq!(code, 0);
        assert_eq!(std::fs::read_to_string(models().join(format!("{name}.toml"))).unwrap(), out);
    }
}

#[test]
fn scalar_exit_table_has_closed_form() {
    let (code, out, err) = run(&["exit", "--model", &model("s1"), "--s", "1", "--T", "1", "--grid", "128"]);
    assert_eq!(code, 0, "{err}");
    let t = table(&out);
    let row = t.rows.iter().find(|r| r[0] == "0.5").unwrap();
    let bt: f64 = row[col(&t, "BT")].parse().unwrap();
    assert!((bt - 2.0 / 3.0 * (-1.0f64 / 6.0).exp()).abs() < 1e-10);
}

#[test]
fn compare_scalar_exit_within_three_errors() {
    let (code, out, err) = run(&[
        "compare", "--model", &model("s2"), "--estimand", "BT", "--s", "1", "--x", "1", "--T", "2", "--paths", "100000",
        "--seed", "7",
    ]);
    assert_eq!(code, 0, "{err}");
    let t = table(&out);
    assert_eq!(t.columns, ["k", "r", "analytic", "mc", "stderr", "zscore"]);
    let z: f64 = t.rows[0][5].parse().unwrap();
    assert!(z.abs() <= 3.0, "z = {z}");
}

#[test]
fn exit_codes() {
    let bad = models().join("../target/bad-model.toml");
    std::fs::write(&bad, "nu = [1.0]\np = [[0.5]]\nlambda = [1.0]\nc = [1.0]\npos_jump_prob = [1.0]\n[[neg_jump]]\n").unwrap();
    let (code, _, err) = run(&["validate", "--model", bad.to_str().unwrap()]);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("\"code\":1") && err.lines().count() == 1);
    let (code, _, _) = run(&["exit", "--preset", "s1", "--grid", "many"]);
    assert_eq!(code, 3);
    let (code, _, err) = run(&["simulate", "--preset", "s1", "--estimand", "nope"]);
    assert_eq!(code, 3);
    assert!(err.contains("available"));
    // zero drift has no s -> 0 limit of the capped reserve transform
    let (code, _, _) = run(&["risk", "--risk-preset", "r1", "--s", "0"]);
    assert_eq!(code, 3);
    // a process that never moves never exits
    let (code, _, err) = run(&["simulate", "--preset", "zero", "--estimand", "BT", "--paths", "2"]);
    assert_eq!(code, 2, "{err}");
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("compare"));
}

#[test]
fn tables_round_trip() {
    for args in [
        vec!["factorize", "--preset", "m2", "--s", "0.5"],
        vec!["density", "--preset", "m2", "--grid", "32"],
        vec!["tails", "--preset", "s2", "--grid", "32"],
        vec!["dividend", "--risk-preset", "rm2"],
        vec!["risk", "--risk-preset", "rm2", "--alpha", "0.5,1"],
    ] {
        let (code, out, err) = run(&args);
        assert_eq!(code, 0, "{args:?}: {err}");
        let mut again = Vec::new();
        table(&out).write_csv(&mut again).unwrap();
        assert_eq!(out.as_bytes(), again.as_slice(), "{args:?}");
    }
}

#[test]
fn json_mirrors_csv() {
    let (_, csv_out, _) = run(&["dividend", "--risk-preset", "r1", "--mu", "0,1"]);
    let (_, json_out, _) = run(&["dividend", "--risk-preset", "r1", "--mu", "0,1", "--format", "json"]);
    let records: serde_json::Value = serde_json::from_str(&json_out).unwrap();
    let t = table(&csv_out);
    assert_eq!(records.as_array().unwrap().len(), t.rows.len());
    assert_eq!(records[1]["quantity"], "laplace");
    assert_eq!(records[1]["mu"], 1.0);
}

#[test]
fn density_table_parts() {
    let (code, out, _) = run(&["density", "--preset", "s1", "--s", "0.7", "--grid", "64", "--x", "0.5"]);
    assert_eq!(code, 0);
    let t = table(&out);
    let atom = t.rows.iter().find(|r| r[0] == "atom").unwrap();
    let v: f64 = atom[col(&t, "value")].parse().unwrap();
    assert!((v - 0.7 / 2.7).abs() < 1e-12);
    assert!(t.rows.iter().any(|r| r[0] == "nonexit"));
}

#[test]
fn output_to_file() {
    let path = models().join("../target/cli-test-defaults.csv");
    let (code, out, _) = run(&["defaults", "--output", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("setting,default,meaning"));
}

#[test]
fn risk_limit_with_positive_drift() {
    let (code, out, err) = run(&["risk", "--risk-preset", "r2", "--s", "0", "--alpha", "0,1"]);
    assert_eq!(code, 0, "{err}");
    let t = table(&out);
    // alpha = 0 is the stationary law
    let row = t.rows.iter().find(|r| r[0] == "cf_limit" && r[1] == "0").unwrap();
    assert_eq!(row[col(&t, "re")], "1");
}
