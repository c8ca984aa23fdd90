use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn foliate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_foliate")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&foliate(&["--help"])), 0);
    let v = foliate(&["--version"]);
    assert_eq!(code(&v), 0);
    assert!(String::from_utf8_lossy(&v.stdout).contains("foliate"));
}

#[test]
fn unknown_subcommand_is_input_error() {
    assert_eq!(code(&foliate(&["frobnicate"])), 2);
}

#[test]
fn hopf_report() {
    let out = foliate(&["report", "--gallery", "hopf_s3", "--point", "0.7,0.2,1.0"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert!((v["mixed_scalar"]["s_mix"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!((v["scalar_curvature"].as_f64().unwrap() - 6.0).abs() < 1e-9);
    assert_eq!(v["nu"], 1);
}

#[test]
fn unknown_gallery_item_is_input_error() {
    let out = foliate(&["report", "--gallery", "klein_bottle", "--point", "0,0"]);
    assert_eq!(code(&out), 2);
    assert!(!out.stderr.is_empty());
}

#[test]
fn gallery_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("twisted.json");
    let p = path.to_str().unwrap();
    assert_eq!(code(&foliate(&["gallery", "export", "weighted_twisted_torus", "--out", p])), 0);
    let a = json(&foliate(&["report", "--gallery", "weighted_twisted_torus", "--point", "0.3,1.1,2.0"]));
    let b = json(&foliate(&["report", "--manifest", p, "--point", "0.3,1.1,2.0"]));
    for key in ["scalar_curvature", "big_n", "cal_n"] {
        let (x, y) = (a[key].as_f64().unwrap(), b[key].as_f64().unwrap());
        assert!((x - y).abs() < 1e-10, "{key}: {x} vs {y}");
    }
    assert_eq!(a["mixed_scalar"], b["mixed_scalar"]);
}

fn write_manifest(dir: &Path, metric11: &str) -> String {
    let text = format!(
        r#"{{"schema":"foliate/1","label":"bad",
            "coordinates":[{{"kind":"periodic","period":6.283185307179586}},{{"kind":"periodic","period":6.283185307179586}}],
            "metric":[["1","0"],["0","{metric11}"]],"distribution":[["1","0"]]}}"#
    );
    let path = dir.join("m.json");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn malformed_manifest_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_manifest(dir.path(), "1 + * x0");
    let out = foliate(&["report", "--manifest", &p, "--point", "0,0"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("metric[1][1]") && err.contains("byte 4"), "{err}");
}

#[test]
fn indefinite_metric_is_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_manifest(dir.path(), "-1");
    assert_eq!(code(&foliate(&["report", "--manifest", &p, "--point", "0,0"])), 3);
}

#[test]
fn verify_pointwise_passes() {
    let out = foliate(&["verify", "pointwise", "--gallery", "conformal_torus", "--points", "20"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["pass"], true);
}

#[test]
fn cd_failure_exits_one() {
    let ok = foliate(&["verify", "cd", "--gallery", "hopf_s3", "--c", "0.999", "--q", "1", "--points", "16"]);
    assert_eq!(code(&ok), 0);
    let bad = foliate(&["verify", "cd", "--gallery", "hopf_s3", "--c", "1.001", "--q", "1", "--points", "16"]);
    assert_eq!(code(&bad), 1);
    assert_eq!(json(&bad)["holds"], false);
}

#[test]
fn constant_riccati_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.csv");
    let out = foliate(&["riccati", "--k", "1", "--n", "2", "--t-end", "2", "--dt", "0.01", "--csv", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let t = v["blow_up"].as_f64().unwrap();
    assert!((t - std::f64::consts::FRAC_PI_2).abs() < 1e-4, "{t}");
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("t,b00,b01,b10,b11\n"));
}

#[test]
fn geodesic_on_flat_torus() {
    let out = foliate(&["geodesic", "--gallery", "flat_torus", "--point", "0,0,0", "--velocity", "0.6,0.8,0", "--t-end", "1"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let end: Vec<f64> = v["end_point"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((end[0] - 0.6).abs() < 1e-12 && (end[1] - 0.8).abs() < 1e-12, "{end:?}");
}

#[test]
fn bounds_subcommands() {
    assert_eq!(json(&foliate(&["bounds", "rho", "--n", "16"]))["rho"], 9);
    let d = json(&foliate(&["bounds", "diameter", "--c", "1", "--q", "1", "--n", "2", "--nu", "1"]));
    assert!((d["bound"]["diam"].as_f64().unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    let f = json(&foliate(&["bounds", "f-delta", "--delta", "0.7"]));
    assert!(f["f"].as_f64().unwrap() > 0.63);
    assert_eq!(code(&foliate(&["bounds", "rho"])), 2);
}

#[test]
fn suite_filter_and_json() {
    let out = foliate(&["suite", "--json", "--only", "bounds,10"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let ids: Vec<_> = v["items"].as_array().unwrap().iter().map(|i| i["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, [9, 10]);
}
