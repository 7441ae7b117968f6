//! End-to-end runs of the `mlqlab` binary with small budgets.

use std::path::Path;
use std::process::{Command, Output};

fn mlqlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlqlab"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mlqlab(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn config(name: &str) -> String {
    format!("{}/../../configs/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn density_csv_has_json_header() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["density", "--points", "11", "--upper", "5"]);
    let text = std::fs::read_to_string(dir.path().join("density.csv")).unwrap();
    let mut lines = text.lines();
    let header: serde_json::Value =
        serde_json::from_str(lines.next().unwrap().trim_start_matches("# ")).unwrap();
    for key in ["beta", "xi", "c", "d"] {
        assert!(header.get(key).is_some(), "{key}");
    }
    assert_eq!(lines.next(), Some("x,pdf,cdf"));
    assert_eq!(lines.count(), 11);
}

#[test]
fn simulate_sde_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let des = d.join("des");
    let sde = d.join("sde");
    ok(
        &des,
        &[
            "simulate",
            "--n",
            "25",
            "--events",
            "200000",
            "--replicas",
            "2",
            "--log-cap",
            "500",
        ],
    );
    ok(
        &sde,
        &["sde", "--dt", "0.01", "--horizon", "500", "--replicas", "2"],
    );
    let a: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(des.join("summary.json")).unwrap()).unwrap();
    let b: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sde.join("summary.json")).unwrap()).unwrap();
    let keys = |v: &serde_json::Value| v.as_object().unwrap().keys().cloned().collect::<Vec<_>>();
    assert_eq!(keys(&a), keys(&b));
    assert_eq!(
        std::fs::read_to_string(des.join("events.csv"))
            .unwrap()
            .lines()
            .count(),
        501
    );
    assert!(std::fs::read_to_string(des.join("ecdf.csv"))
        .unwrap()
        .starts_with("x,F,ci_half\n"));

    let des_ecdf = des.join("ecdf.csv");
    let sde_ecdf = sde.join("ecdf.csv");
    ok(d, &["compare", des_ecdf.to_str().unwrap()]);
    let c: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("compare.json")).unwrap()).unwrap();
    let ks = c["ks"].as_f64().unwrap();
    assert!(ks > 0.0 && ks < 0.2, "{ks}");
    ok(
        d,
        &[
            "compare",
            des_ecdf.to_str().unwrap(),
            sde_ecdf.to_str().unwrap(),
        ],
    );
}

#[test]
fn json_format_and_reproducible_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let p = dir.path().join(sub);
        ok(
            &p,
            &[
                "--format",
                "json",
                "--seed",
                "9",
                "simulate",
                "--n",
                "16",
                "--events",
                "50000",
                "--replicas",
                "1",
            ],
        );
        std::fs::read_to_string(p.join("ecdf.json")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn identity_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = config("e2");
    ok(
        d,
        &[
            "--config",
            &cfg,
            "barcheck",
            "--n",
            "25",
            "--events",
            "300000",
            "--replicas",
            "2",
        ],
    );
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("barcheck.json")).unwrap()).unwrap();
    assert_eq!(r["bar"].as_array().unwrap().len(), 5);
    ok(d, &["etazeta", "--theta", "0.1,-0.1"]);
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("etazeta.json")).unwrap()).unwrap();
    assert!((r["solutions"][0]["eta"].as_f64().unwrap() - 0.1f64.exp_m1()).abs() < 1e-10);
    ok(d, &["etazeta", "--theta", "-1,0.1"]);
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("etazeta.json")).unwrap()).unwrap();
    assert_eq!(r["solutions"].as_array().unwrap().len(), 2);
    ok(d, &["dmcheck", "--events", "10000"]);
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("dmcheck.json")).unwrap()).unwrap();
    assert!(r.as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn sweep_isolates_bad_n_and_writes_versioned_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = mlqlab(
        dir.path(),
        &[
            "sweep",
            "--n",
            "4,0,9",
            "--events",
            "20000",
            "--replicas",
            "2",
        ],
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n = 0"));
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(text.starts_with("# mlqlab-sweep v1\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nlevels = [1.0]\n").unwrap();
    let out = mlqlab(dir.path(), &["--config", bad.to_str().unwrap(), "density"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let truncated = dir.path().join("cut.csv");
    std::fs::write(&truncated, "x,F,ci_half\n0,0.5,0.1\n1,0.7").unwrap();
    assert!(
        !mlqlab(dir.path(), &["compare", truncated.to_str().unwrap()])
            .status
            .success()
    );
    assert!(
        !mlqlab(dir.path(), &["--replicas", "0", "simulate", "--n", "4"])
            .status
            .success()
    );
}
