use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name).to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_carnot-singular")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn ok_json(args: &[&str]) -> Value {
    let (code, out, err) = run(args);
    assert_eq!(code, 0, "{args:?}: {err}");
    serde_json::from_str(&out).unwrap()
}

fn check_schema(name: &str, v: &Value) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn write_temp(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn algebra_info_dims() {
    let (code, out, _) = run(&["algebra", "info", "--free", "2", "3"]);
    assert_eq!(code, 0);
    assert!(out.contains("layer dims [2, 1, 2]"));
    let v = ok_json(&["algebra", "info", "--free", "3", "3", "--json"]);
    assert_eq!(v["layer_dims"], serde_json::json!([3, 3, 8]));
    check_schema("algebra_info", &v);
}

#[test]
fn algebra_spec_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (code, spec, _) = run(&["algebra", "info", "--free", "2", "4", "--spec"]);
    assert_eq!(code, 0);
    let path = write_temp(&dir, "free24.json", &spec);
    let v = ok_json(&["algebra", "info", "--file", &path, "--json"]);
    assert_eq!(v["layer_dims"], serde_json::json!([2, 1, 2, 3]));
}

#[test]
fn jacobi_violation_rejected() {
    let (code, _, err) = run(&["algebra", "info", "--file", &data("bad_jacobi.json")]);
    assert_eq!(code, 2);
    assert!(err.contains("Jacobi"), "{err}");
}

#[test]
fn classify_examples() {
    let v = ok_json(&["classify", "--covector", &data("r2s4_saddle.json"), "--free", "2", "4"]);
    check_schema("stratum_report", &v);
    assert_eq!((v["Lambda"].as_u64(), v["Xi"].as_u64()), (Some(1), Some(1)));
    assert_eq!(v["b"], serde_json::json!(["1", "1"]));
    let v = ok_json(&["classify", "--covector", &data("r2s4_rotation.json"), "--free", "2", "4"]);
    assert_eq!(v["Lambda"], 2);
    let v = ok_json(&["classify", "--covector", &data("r2s4_parabola.json"), "--free", "2", "4"]);
    assert_eq!((v["Lambda"].as_u64(), v["Xi"].as_u64()), (Some(3), Some(7)));
    let v = ok_json(&["classify", "--covector", &data("r3s3_tree.json"), "--free", "3", "3"]);
    assert_eq!((v["Lambda"].as_u64(), v["Xi"].as_u64()), (Some(5), Some(9)));
    let f = ok_json(&["--mode", "float", "classify", "--covector", &data("r3s3_tree.json"), "--free", "3", "3"]);
    check_schema("stratum_report", &f);
    assert_eq!(f["Lambda"], 5);
    assert_eq!(f["mode"], "float");
}

#[test]
fn classify_needs_vanishing_low_layers() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_temp(&dir, "low.json", r#"{"1": "1", "2112": "1"}"#);
    let (code, _, err) = run(&["classify", "--covector", &p, "--free", "2", "4"]);
    assert_eq!(code, 2);
    assert!(err.contains("zero the g1* part"), "{err}");
    let p = write_temp(&dir, "bad.json", r#"{"2112": "1", "1212": "2"}"#);
    assert_eq!(run(&["classify", "--covector", &p, "--free", "2", "4"]).0, 2);
}

#[test]
fn trace_saddle_rows() {
    let (code, out, err) =
        run(&["--mode", "float", "trace", "--covector", &data("r2s4_saddle.json"), "--free", "2", "4", "--dt", "0.125"]);
    assert_eq!(code, 0, "{err}");
    let (header, rows) = csv_rows(&out);
    assert_eq!(&header[..3], ["t", "z1", "z2"]);
    assert_eq!(header.len(), 3 + 8);
    assert_eq!(rows.len(), 9);
    for r in &rows {
        let t = r[0];
        assert!((r[1] - (t.exp() - 1.0)).abs() <= 1e-12);
        assert!((r[2] - (1.0 - (-t).exp())).abs() <= 1e-12);
        // horizontal part of the lift is the curve itself
        assert!((r[3] - r[1]).abs() <= 1e-12 && (r[4] - r[2]).abs() <= 1e-12);
    }
}

#[test]
fn trace_circle_closes() {
    let two_pi = format!("{}", std::f64::consts::TAU);
    let (code, out, err) = run(&[
        "--mode", "float", "trace", "--covector", &data("r2s4_rotation.json"), "--free", "2", "4", "--t1", &two_pi, "--dt",
        "0.05",
    ]);
    assert_eq!(code, 0, "{err}");
    let (_, rows) = csv_rows(&out);
    let (a, b) = (&rows[0], rows.last().unwrap());
    assert!(((a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt() <= 1e-9);
}

#[test]
fn trace_tree_stays_in_two_planes() {
    let (code, out, err) = run(&["trace", "--covector", &data("r3s3_tree.json"), "--free", "3", "3", "--dt", "0.25"]);
    assert_eq!(code, 0, "{err}");
    let (_, rows) = csv_rows(&out);
    assert!(rows.len() > 3);
    assert!(rows.iter().all(|r| r[1] == 0.0 || r[2] == 1.0));
    assert!(rows.iter().any(|r| r[1] != 0.0) && rows.iter().any(|r| r[2] != 1.0));
    let last = rows.last().unwrap();
    assert_eq!(&last[1..4], [1.0, 1.0, 1.0]);
}

#[test]
fn exact_trace_refuses_exponential_curve() {
    let (code, _, err) = run(&["trace", "--covector", &data("r2s4_saddle.json"), "--free", "2", "4"]);
    assert_eq!(code, 2);
    assert!(err.contains("--mode float"), "{err}");
}

#[test]
fn verify_catalog_passes() {
    let v = ok_json(&["verify", "--catalog"]);
    check_schema("catalog_report", &v);
    let arr = v.as_array().unwrap();
    assert_eq!(arr.len(), 4);
    assert!(arr.iter().all(|r| r["pass"] == true));
    let one = ok_json(&["verify", "--catalog", "coordinate-loop"]);
    assert_eq!(one[0]["r_rank"], 9);
    assert_eq!(run(&["verify", "--catalog", "nope"]).0, 2);
}

#[test]
fn verify_control_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_temp(&dir, "line.json", r#"{"pieces": [{"duration": "1", "poly": [["1"], ["0"]]}]}"#);
    let v = ok_json(&["verify", "--control", &p, "--free", "2", "3"]);
    check_schema("singularity_report", &v);
    assert_eq!(v["rank"], 4);
    assert_eq!(v["codim"], 1);
    assert_eq!(v["goh"], true);
    assert_eq!(v["residual_exact_zero"], true);
    let l = write_temp(&dir, "lambda.json", r#"{"112": "1"}"#);
    let v = ok_json(&["verify", "--control", &p, "--free", "2", "3", "--covector", &l]);
    assert_eq!(v["residual_exact_zero"], false);
    let f = ok_json(&["--mode", "float", "verify", "--control", &p, "--free", "2", "3"]);
    check_schema("singularity_report", &f);
    assert_eq!(f["codim"], 1);
}

#[test]
fn codim_reports() {
    for (case, overall) in [("r2s3", 3), ("r2s4", 3), ("r3s3", 1), ("r3s3-free", 3)] {
        let v = ok_json(&["report", "codim", case, "--json"]);
        check_schema("codim_table", &v);
        assert_eq!(v["overall"], overall);
    }
    let v = ok_json(&["report", "codim", "r2s4", "--json"]);
    assert!(v["strata"].as_array().unwrap().iter().all(|s| s["computed"].as_u64().unwrap() >= 3));
    let (code, text, _) = run(&["report", "codim", "r3s3"]);
    assert_eq!(code, 0);
    assert!(text.ends_with("overall 1\n"));
}

#[test]
fn r2s5_drift_exact_zero() {
    let v = ok_json(&["r2s5", "--params", &data("r2s5_drift.json"), "--dt", "0.125", "--levels", "2"]);
    check_schema("r2s5_report", &v);
    for row in v["rows"].as_array().unwrap() {
        assert_eq!(row["exact_zero"], true);
        assert_eq!(row["residual"], 0.0);
    }
}

#[test]
fn r2s5_generic_refines() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("traj.csv");
    let v = ok_json(&[
        "--mode", "float", "--out", csv_path.to_str().unwrap(), "r2s5", "--params", &data("r2s5_generic.json"),
    ]);
    check_schema("r2s5_report", &v);
    assert!(v["order_estimate"].as_f64().unwrap() >= 1.0);
    assert!(v["theta_consistency"].as_f64().unwrap() <= 10.0 * 0.0125f64.powi(4));
    let (header, rows) = csv_rows(&std::fs::read_to_string(csv_path).unwrap());
    assert_eq!(header, ["t", "z1", "z2", "theta"]);
    assert_eq!(rows.len(), 81);
}

#[test]
fn r2s5_rejects_and_blows_up() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_temp(&dir, "bad.json", r#"{"22112": "1"}"#);
    let (code, _, err) = run(&["r2s5", "--params", &bad]);
    assert_eq!(code, 2);
    assert!(err.contains("bracket relations"), "{err}");
    let blow = write_temp(&dir, "blow.json", r#"{"212": "1", "11212": "1", "(12)(112)": "1"}"#);
    let (code, out, _) = run(&["--mode", "float", "r2s5", "--params", &blow, "--t1", "50", "--bound", "1000"]);
    assert_eq!(code, 4);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["blown_up"], true);
}

#[test]
fn outputs_are_deterministic() {
    let runs = [
        vec!["--mode", "float", "--seed", "11", "r2s5"],
        vec!["verify", "--catalog", "gole-karidi"],
        vec!["--mode", "float", "trace", "--covector", "R2S4_SADDLE", "--free", "2", "4"],
    ];
    let saddle = data("r2s4_saddle.json");
    for args in runs {
        let args: Vec<&str> = args.iter().map(|a| if *a == "R2S4_SADDLE" { saddle.as_str() } else { a }).collect();
        let a = run(&args);
        let b = run(&args);
        assert_eq!(a.0, 0, "{args:?}: {}", a.2);
        assert_eq!(a.1, b.1);
    }
    let a = run(&["--mode", "float", "--seed", "11", "r2s5"]).1;
    let b = run(&["--mode", "float", "--seed", "12", "r2s5"]).1;
    assert_ne!(a, b);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("codim.txt");
    let (code, stdout, _) = run(&["--out", p.to_str().unwrap(), "report", "codim", "r2s4"]);
    assert_eq!(code, 0);
    assert!(stdout.is_empty());
    assert!(std::fs::read_to_string(p).unwrap().contains("overall 3"));
}
