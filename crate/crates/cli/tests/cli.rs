use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn cnmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnmt"))
        .args(args)
        .output()
        .expect("spawn cnmt")
}

fn ok(args: &[&str]) -> String {
    let out = cnmt(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(rel)
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn fit_length_on_exact_line() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = write(dir.path(), "de-en.tsv", "n\tm_real\n1\t3\n2\t5\n3\t7\n");
    let v = json(&ok(&["fit-length", "--pairs", &pairs, "--max-ratio", "10"]));
    assert!((v["length_model"]["gamma"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!((v["length_model"]["delta"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(v["length_model"]["language_pair"], "de-en");
    assert_eq!(v["fit"]["r2"], 1.0);

    // every pair of the exact line exceeds a 2:1 length ratio
    let out = cnmt(&["fit-length", "--pairs", &pairs, "--max-ratio", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("removed all 3 pairs"), "{err}");
}

#[test]
fn fit_length_drops_ratio_outlier() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = write(dir.path(), "p.tsv", "n\tm_real\n10\t10\n20\t20\n10\t1000\n");
    let out = dir.path().join("len.json");
    ok(&[
        "fit-length",
        "--pairs",
        &pairs,
        "--max-ratio",
        "2",
        "--max-len",
        "5000",
        "--out",
        out.to_str().unwrap(),
    ]);
    let v = json(&std::fs::read_to_string(out).unwrap());
    assert!((v["length_model"]["gamma"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(v["length_model"]["delta"].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(v["fit"]["sample_count"], 2);
    assert_eq!(v["pairs_total"], 3);
}

#[test]
fn fit_latency_on_exact_plane() {
    let dir = tempfile::tempdir().unwrap();
    let samples = write(
        dir.path(),
        "jetson.csv",
        "n,m,t_ms\n1,1,3.5\n2,1,4\n1,2,5.5\n3,2,6.5\n",
    );
    let v = json(&ok(&["fit-latency", "--samples", &samples]));
    let p = &v["profile"];
    assert_eq!(p["device_id"], "jetson");
    for (k, want) in [("alpha_n", 0.5), ("alpha_m", 2.0), ("beta", 1.0)] {
        assert!((p[k].as_f64().unwrap() - want).abs() < 1e-9, "{k}");
    }
    assert!((v["fit"]["r2"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn usage_errors_exit_2_and_io_errors_exit_1() {
    assert_eq!(cnmt(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cnmt(&["fit-latency"]).status.code(), Some(2));
    assert_eq!(
        cnmt(&["gen-trace", "--preset", "cp9", "--out", "x"])
            .status
            .code(),
        Some(2)
    );

    let out = cnmt(&["fit-latency", "--samples", "/nonexistent/samples.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(
        err.starts_with("error:") && err.contains("/nonexistent/samples.csv"),
        "{err}"
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "n,m,t_ms\n1,1,3\n2,x,4\n");
    let err = String::from_utf8(cnmt(&["fit-latency", "--samples", &bad]).stderr).unwrap();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn generators_are_deterministic_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = data("synth_corpus.json");
    let spec = spec.to_str().unwrap();
    for name in ["a.tsv", "b.tsv"] {
        ok(&[
            "gen-corpus",
            "--spec",
            spec,
            "--out",
            d.join(name).to_str().unwrap(),
        ]);
    }
    ok(&[
        "gen-corpus",
        "--spec",
        spec,
        "--seed",
        "8",
        "--out",
        d.join("c.tsv").to_str().unwrap(),
    ]);
    let a = std::fs::read(d.join("a.tsv")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.tsv")).unwrap());
    assert_ne!(a, std::fs::read(d.join("c.tsv")).unwrap());
    let corpus = cnmt_core::workload::load_corpus(d.join("a.tsv")).unwrap();
    assert_eq!(corpus.len(), 10_000);
    let mut again = Vec::new();
    corpus.write_tsv(&mut again).unwrap();
    assert_eq!(again, a);

    for name in ["t1.csv", "t2.csv"] {
        ok(&[
            "gen-trace",
            "--preset",
            "cp1",
            "--seed",
            "3",
            "--out",
            d.join(name).to_str().unwrap(),
        ]);
    }
    let t = std::fs::read(d.join("t1.csv")).unwrap();
    assert_eq!(t, std::fs::read(d.join("t2.csv")).unwrap());
    let trace = cnmt_core::RttTrace::read_csv("t1", &t[..]).unwrap();
    let mut again = Vec::new();
    trace.write_csv(&mut again).unwrap();
    assert_eq!(again, t);
}

/// Copies a shipped experiment config into `dir`, pointing its outputs there.
fn local_config(dir: &Path, name: &str) -> PathBuf {
    let mut cfg =
        json(&std::fs::read_to_string(data(&format!("experiments/{name}.json"))).unwrap());
    if let Some(path) = cfg["trace"].get("path").and_then(Value::as_str) {
        let abs = data("experiments").join(path);
        cfg["trace"]["path"] = Value::String(abs.to_str().unwrap().into());
    }
    cfg["output_dir"] = Value::String("out".into());
    let p = dir.join(format!("{name}.json"));
    std::fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in [dir.to_path_buf(), dir.join("runs")] {
        let mut names: Vec<_> = std::fs::read_dir(&sub)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.is_file())
            .collect();
        names.sort();
        for p in names {
            out.push((p.display().to_string(), std::fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn compare_perfect_information_is_byte_stable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let cfg = local_config(d, "perfect_information");
        ok(&["compare", "--config", cfg.to_str().unwrap()]);
    }
    let report = json(&std::fs::read_to_string(a.path().join("out/report.json")).unwrap());
    let cnmt_row = report["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["policy"] == "cnmt")
        .unwrap();
    assert_eq!(cnmt_row["vs_oracle_pct"].as_f64().unwrap(), 0.0);

    let left = artifacts(&a.path().join("out"));
    let right = artifacts(&b.path().join("out"));
    assert!(
        left.len() >= 8,
        "{:?}",
        left.iter().map(|x| &x.0).collect::<Vec<_>>()
    );
    assert_eq!(left.len(), right.len());
    for ((_, x), (name, y)) in left.iter().zip(&right) {
        assert!(x == y, "{name} differs between identical runs");
    }
}

#[test]
fn simulate_then_replay_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = local_config(dir.path(), "perfect_information");
    let cfg = cfg.to_str().unwrap();
    ok(&["compare", "--config", cfg]);
    let run = dir.path().join("naive.csv");
    let line = ok(&[
        "simulate",
        "--config",
        cfg,
        "--policy",
        "naive",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(line.starts_with("naive: 10000 requests"), "{line}");
    assert_eq!(
        std::fs::read(&run).unwrap(),
        std::fs::read(dir.path().join("out/runs/naive.csv")).unwrap()
    );

    let models = dir.path().join("out/models.json");
    let cnmt_log = dir.path().join("out/runs/cnmt.csv");
    let out = ok(&[
        "replay-check",
        "--log",
        cnmt_log.to_str().unwrap(),
        "--model",
        models.to_str().unwrap(),
    ]);
    assert_eq!(out.trim(), "10000/10000 decisions match");

    // the naive log was produced under a different assumed output length
    let out = cnmt(&[
        "replay-check",
        "--log",
        run.to_str().unwrap(),
        "--model",
        models.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.ends_with("decisions match\n") && !text.starts_with("10000/"),
        "{text}"
    );
}

#[test]
fn experiment_config_rejects_unknown_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = local_config(dir.path(), "perfect_information");
    let mut v = json(&std::fs::read_to_string(&cfg).unwrap());
    v["polices"] = Value::Array(vec![]);
    std::fs::write(&cfg, v.to_string()).unwrap();
    let out = cnmt(&["compare", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("polices"));
}
