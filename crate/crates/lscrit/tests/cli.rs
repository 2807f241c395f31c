use std::fs;
use std::process::{Command, Output};

use lscrit::io::read_dataset;
use lscrit::report::{parse_report, Format};
use serde_json::Value;

fn lscrit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lscrit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn error_object(out: &Output) -> Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).expect("machine-readable error")
}

const TINY: &str = "H_candidates = [1, 2]\nn = 50\nseed = 4\n[chain]\nchains = 2\nwarmup = 200\ndraws = 200\n";

#[test]
fn lambda_formulas() {
    let v: Value = serde_json::from_str(&stdout(&lscrit(&[
        "lambda", "aoyagi", "--m", "3", "--n", "4", "--h", "3", "--r", "3", "--format", "json",
    ])))
    .unwrap();
    assert_eq!(v["lambda"], "6");
    assert_eq!(v["case"], "3");
    assert_eq!(v["multiplicity"], 1);

    let text = stdout(&lscrit(&["lambda", "aoyagi", "--m", "1", "--n", "1", "--h", "1", "--r", "0"]));
    assert_eq!(text, "lambda,value,multiplicity,case,upper_bound\n1/2,0.5,2,1b,false\n");

    let v: Value = serde_json::from_str(&stdout(&lscrit(&[
        "lambda", "gmm-bound", "--dim", "2", "--h-star", "2", "--h", "4", "--format", "json",
    ])))
    .unwrap();
    assert_eq!(v["lambda"], "7/2");
    assert_eq!(v["upper_bound"], true);

    let text = stdout(&lscrit(&["lambda", "regular", "--d", "10"]));
    assert!(text.ends_with("5,5,1,regular,false\n"), "{text}");
}

#[test]
fn errors_are_json_with_nonzero_exit() {
    let e = error_object(&lscrit(&["lambda", "aoyagi", "--m", "2", "--n", "2", "--h", "1", "--r", "2"]));
    assert_eq!(e["error"], "computation");
    assert!(e["message"].as_str().unwrap().contains("min"), "{e}");

    let e = error_object(&lscrit(&["experiment", "--preset", "nope"]));
    assert_eq!(e["error"], "config");

    let e = error_object(&lscrit(&["experiment"]));
    assert_eq!(e["error"], "config");

    let e = error_object(&lscrit(&["frobnicate"]));
    assert_eq!(e["error"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "H_candidates = [1]\nwat = 2\n").unwrap();
    let e = error_object(&lscrit(&["experiment", "--config", bad.to_str().unwrap()]));
    assert!(e["message"].as_str().unwrap().contains("wat"));

    let missing = dir.path().join("missing.toml");
    let e = error_object(&lscrit(&["experiment", "--config", missing.to_str().unwrap()]));
    assert_eq!(e["error"], "io");
}

#[test]
fn generate_is_deterministic_and_readable() {
    let a = stdout(&lscrit(&["generate", "--preset", "rrr_table2", "--seed", "3"]));
    let b = stdout(&lscrit(&["generate", "--preset", "rrr_table2", "--seed", "3"]));
    assert_eq!(a, b);
    assert!(a.starts_with("x1,x2,x3,y1,y2,y3,y4\n"));
    let data = read_dataset(a.as_bytes()).unwrap();
    assert_eq!(data.len(), 100);
    let c = stdout(&lscrit(&["generate", "--preset", "rrr_table2", "--seed", "4"]));
    assert_ne!(a, c);
}

#[test]
fn experiment_writes_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("report.json");
    let run = lscrit(&[
        "experiment",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
        "--repeats",
        "2",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let rows = parse_report(&fs::read_to_string(&out).unwrap(), Format::Json).unwrap();
    // 2 seeds × 2 candidates × 3 criteria × 2 β₀
    assert_eq!(rows.len(), 24);
    assert_eq!(rows.iter().filter(|r| r.seed == 4).count(), 12);
    assert_eq!(rows.iter().filter(|r| r.seed == 5).count(), 12);
    let summary = String::from_utf8_lossy(&run.stderr);
    assert!(summary.contains("selected"), "{summary}");
}

#[test]
fn criteria_for_one_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let text = stdout(&lscrit(&[
        "criteria",
        "--config",
        cfg.to_str().unwrap(),
        "--candidate",
        "1",
        "--format",
        "json",
    ]));
    let v: Value = serde_json::from_str(&text).unwrap();
    let objs = v.as_array().unwrap();
    // WBIC per β₀, one LS, one sBIC
    assert_eq!(objs.len(), 4);
    for o in objs {
        let keys: Vec<&str> = o.as_object().unwrap().keys().map(String::as_str).collect();
        for k in [
            "criterion",
            "value",
            "lambda",
            "lambda_source",
            "beta0",
            "n",
            "candidate",
            "ess_min",
            "rhat_max",
            "seed",
        ] {
            assert!(keys.contains(&k), "{k} missing from {o}");
        }
        assert_eq!(o["n"], 50);
        assert_eq!(o["candidate"], 1);
        assert_eq!(o["beta0"].is_null(), o["criterion"] != "WBIC");
    }
}

#[test]
fn sample_dumps_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let text = stdout(&lscrit(&[
        "sample",
        "--config",
        cfg.to_str().unwrap(),
        "--candidate",
        "2",
        "--beta0",
        "1",
    ]));
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("chain,iter,tempered_logpost,untempered_loglik,"));
    assert_eq!(header.split(',').count(), 4 + 2 + 4);
    assert_eq!(lines.count(), 2 * 200);
}
