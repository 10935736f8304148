use std::path::Path;
use std::process::{Command, Output};

fn aslks(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aslks"))
        .args(args)
        .env_remove("ASLKS_CORRUPT_FIXTURE")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn verify_suite_passes_and_reports_cases() {
    let o = aslks(&["verify", "--suite", "lksc", "--seed", "3", "--dtype", "f64"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["pass"], true);
    assert_eq!(v["suite"], "lksc");
    assert!(v["cases"].as_array().unwrap().iter().all(|c| c["max_err"].as_f64().unwrap() <= c["tolerance"].as_f64().unwrap()));
}

#[test]
fn corrupted_fixture_fails_with_exit_one() {
    let o = Command::new(env!("CARGO_BIN_EXE_aslks"))
        .args(["verify", "--suite", "asc"])
        .env("ASLKS_CORRUPT_FIXTURE", "asc")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let v = json(&o);
    let failed: Vec<&str> = v["cases"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["status"] == "fail")
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, vec!["asc/fixture_roundtrip"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("asc/fixture_roundtrip"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(aslks(&["verify", "--suite", "bogus"]).status.code(), Some(2));
    assert_eq!(aslks(&["bench", "--repeats", "2"]).status.code(), Some(2));
    assert_eq!(aslks(&["bench", "--input", "1,2,3"]).status.code(), Some(2));
    assert_eq!(aslks(&["flops", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));
}

#[test]
fn bench_reports_agreeing_paths() {
    let o = aslks(&["bench", "--input", "1,2,24,24", "--kernel", "11", "--tile", "3", "--repeats", "3", "--dtype", "f64"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert!(v["max_abs_diff"].as_f64().unwrap() <= v["tolerance"].as_f64().unwrap());
    let ratio = v["mac_ratio"].as_f64().unwrap();
    assert!(ratio > 0.0 && ratio < 1.0);
}

#[test]
fn flops_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("stack.json");
    std::fs::write(
        &cfg,
        r#"[{"variant": "standard", "c_in": 16, "c_out": 32},
            {"variant": "lkscm", "c_in": 32, "c_out": 32, "kernel": 51, "tile": 5}]"#,
    )
    .unwrap();
    let out = dir.path().join("cost.json");
    let o = aslks(&["flops", "--config", path(&cfg), "--input", "1,16,32,32", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["modified_not_larger_than_dense"], true);
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().contains("realization"));
    assert!(lines.count() >= 6);
}

#[test]
fn flops_parse_error_names_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "[{\"variant\": \"standard\",\n  \"c_in\": 16 \"c_out\": 32}]").unwrap();
    let o = aslks(&["flops", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn metrics_handles_empty_detections_and_bad_records() {
    let dir = tempfile::tempdir().unwrap();
    let (d, g) = (dir.path().join("d.json"), dir.path().join("g.json"));
    std::fs::write(&d, "[]").unwrap();
    std::fs::write(&g, r#"[{"image_id": 0, "class_id": 0, "box": [0, 0, 4, 4]}]"#).unwrap();
    let o = aslks(&["metrics", "--detections", path(&d), "--ground-truth", path(&g), "--n-classes", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("\"map50\": 0.0000"));

    std::fs::write(&d, r#"[{"image_id": 0, "class_id": 0, "box": [0, 0, 4, 4], "confidence": 1.5}]"#).unwrap();
    let o = aslks(&["metrics", "--detections", path(&d), "--ground-truth", path(&g), "--n-classes", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("detection 0"));
}
