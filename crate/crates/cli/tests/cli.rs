use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn gsan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsan"))
        .args(args)
        .env_remove("GSAN_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FAST: &[&str] = &["--heads", "2", "--hidden", "4", "--state-size", "4", "--max-epochs", "15"];

fn train_sbm(out: &Path, extra: &[&str]) -> Output {
    let sbm = fixture("sbm");
    let mut args = vec!["train", "--dataset", s(&sbm), "--out", s(out)];
    args.extend_from_slice(FAST);
    args.extend_from_slice(extra);
    gsan(&args)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn without_clock(mut v: serde_json::Value) -> serde_json::Value {
    v.as_object_mut().unwrap().remove("wall_clock_secs");
    v
}

#[test]
fn validate_exit_codes() {
    let ok = gsan(&["validate", s(&fixture("toy"))]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("ok: 1 graph(s), 6 nodes"));

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad");
    fs::create_dir(&bad).unwrap();
    for f in ["meta.json", "features.csv", "labels.csv", "masks.csv"] {
        fs::copy(fixture("toy").join(f), bad.join(f)).unwrap();
    }
    fs::write(bad.join("edges.csv"), "src,dst\n0,1\n1,x\n").unwrap();
    let o = gsan(&["validate", s(&bad)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("edges.csv"));

    fs::write(bad.join("edges.csv"), "src,dst\n0,1\n").unwrap();
    fs::remove_file(bad.join("meta.json")).unwrap();
    assert_eq!(code(&gsan(&["validate", s(&bad)])), 2);

    let j = gsan(&["validate", "--json", s(&fixture("sign"))]);
    assert_eq!(code(&j), 0);
    assert_eq!(serde_json::from_slice::<serde_json::Value>(&j.stdout).unwrap(), serde_json::json!([]));
}

#[test]
fn train_writes_artifacts_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    // artifacts echo out_dir, so the rerun goes to the same place
    let a = tmp.path().join("a");
    assert_eq!(code(&train_sbm(&a, &["--seed", "3"])), 0);
    let first_ckpt = fs::read(a.join("ckpt")).unwrap();
    let first = json(&a.join("report.json"));
    assert_eq!(code(&train_sbm(&a, &["--seed", "3"])), 0);
    for f in ["report.json", "metrics.csv", "ckpt"] {
        assert!(a.join(f).is_file(), "{} missing", f);
    }
    let report = json(&a.join("report.json"));
    assert_eq!(report["seed"], 3);
    assert_eq!(report["config"]["seed"], 3);
    assert_eq!(report["config"]["heads"], 2);
    let csv = fs::read_to_string(a.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epoch,train_loss,val_loss,val_acc,val_f1"));
    assert_eq!(lines.count(), report["epochs"].as_array().unwrap().len());
    assert_eq!(without_clock(report), without_clock(first));
    assert_eq!(fs::read(a.join("ckpt")).unwrap(), first_ckpt);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, r#"{"heads": 4, "hidden": 4, "patience": 2, "lr": 0.01}"#).unwrap();
    let out = tmp.path().join("o");
    let sbm = fixture("sbm");
    let args = ["train", "--dataset", s(&sbm), "--out", s(&out), "--max-epochs", "3", "--config", s(&cfg), "--heads", "1"];
    assert_eq!(code(&gsan(&args)), 0);
    let r = json(&out.join("report.json"));
    assert_eq!(r["config"]["heads"], 1);
    assert_eq!(r["config"]["lr"], 0.01);
    assert_eq!(r["config"]["patience"], 2);
    assert_eq!(r["config"]["dropout"], 0.6);

    fs::write(&cfg, r#"{"hedas": 4}"#).unwrap();
    assert_eq!(code(&train_sbm(&out, &["--config", s(&cfg)])), 2);
}

#[test]
fn eval_reproduces_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(code(&train_sbm(&out, &[])), 0);
    let report = json(&out.join("report.json"));
    let ckpt = out.join("ckpt");
    let e1 = gsan(&["eval", "--ckpt", s(&ckpt), "--dataset", s(&fixture("sbm")), "--out", s(&out)]);
    assert_eq!(code(&e1), 0);
    let v: serde_json::Value = serde_json::from_slice(&e1.stdout).unwrap();
    assert_eq!(v["metrics"], report["test"]);
    assert_eq!(v["config"], report["config"]);
    assert_eq!(json(&out.join("eval.json")), v);
    let e2 = gsan(&["eval", "--ckpt", s(&ckpt), "--dataset", s(&fixture("sbm"))]);
    assert_eq!(e1.stdout, e2.stdout);
    let val = gsan(&["eval", "--ckpt", s(&ckpt), "--dataset", s(&fixture("sbm")), "--split", "val"]);
    let v: serde_json::Value = serde_json::from_slice(&val.stdout).unwrap();
    assert_eq!(v["metrics"], report["val"]);

    let mismatch = gsan(&["eval", "--ckpt", s(&ckpt), "--dataset", s(&fixture("toy"))]);
    assert_eq!(code(&mismatch), 2);
    assert_eq!(code(&gsan(&["eval", "--ckpt", s(&fixture("toy").join("meta.json")), "--dataset", s(&fixture("toy"))])), 2);
}

#[test]
fn embed_rows_width_and_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(code(&train_sbm(&out, &["--layers", "3"])), 0);
    let o = gsan(&["embed", "--ckpt", s(&out.join("ckpt")), "--dataset", s(&fixture("sbm"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("embeddings.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    // last layer averages its heads, so the width is hidden
    assert_eq!(header.len(), 1 + 4 + 1);
    assert_eq!((header[0], header[1], header[4], header[5]), ("node", "dim_0", "dim_3", "label"));
    let labels = fs::read_to_string(fixture("sbm").join("labels.csv")).unwrap();
    let want: Vec<&str> = labels.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 30);
    for (i, r) in rows.iter().enumerate() {
        let cells: Vec<&str> = r.split(',').collect();
        assert_eq!(cells[0], i.to_string());
        assert_eq!(cells[5], want[i]);
    }
}

#[test]
fn embed_inductive_graph() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let sign = fixture("sign");
    let mut args = vec!["train", "--dataset", s(&sign), "--out", s(&out)];
    args.extend_from_slice(FAST);
    assert_eq!(code(&gsan(&args)), 0);
    let o = gsan(&["embed", "--ckpt", s(&out.join("ckpt")), "--dataset", s(&sign), "--graph", "g03"]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("embeddings.csv")).unwrap();
    let first = csv.lines().nth(1).unwrap();
    let bits = first.rsplit(',').next().unwrap();
    assert_eq!(bits.len(), 4);
    assert_eq!(code(&gsan(&["embed", "--ckpt", s(&out.join("ckpt")), "--dataset", s(&sign), "--graph", "nope"])), 2);
}

#[test]
fn sweep_writes_table_and_chart() {
    let tmp = tempfile::tempdir().unwrap();
    let sbm = fixture("sbm");
    for depths in ["2", "1,3"] {
        let out = tmp.path().join(depths.replace(',', "_"));
        let mut args = vec!["sweep-depth", "--dataset", s(&sbm), "--out", s(&out), "--depths", depths];
        args.extend_from_slice(FAST);
        assert_eq!(code(&gsan(&args)), 0);
        let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "depth,val_acc,test_acc");
        assert_eq!(lines.len() - 1, depths.split(',').count());
        let svg = fs::read_to_string(out.join("sweep.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
    }
}

#[test]
fn repeats_aggregate_matches_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let sbm = fixture("sbm");
    let mut args = vec!["repeats", "--dataset", s(&sbm), "--out", s(&out), "-k", "3", "--seed", "10"];
    args.extend_from_slice(FAST);
    assert_eq!(code(&gsan(&args)), 0);
    let agg = json(&out.join("repeats.json"));
    assert_eq!(agg["k"], 3);
    assert_eq!(agg["seeds"], serde_json::json!([10, 11, 12]));
    let vals: Vec<f64> = (10..13)
        .map(|seed| json(&out.join(format!("runs/seed_{}/report.json", seed)))["test"]["accuracy"].as_f64().unwrap())
        .collect();
    let mean = vals.iter().sum::<f64>() / 3.0;
    let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    assert!((agg["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!((agg["std"].as_f64().unwrap() - std).abs() < 1e-12);

    // a single seed trained on its own gives the same report
    let solo = tmp.path().join("solo");
    assert_eq!(code(&train_sbm(&solo, &["--seed", "11"])), 0);
    let strip = |v: serde_json::Value| {
        let mut v = without_clock(v);
        v["config"].as_object_mut().unwrap().remove("out_dir");
        v
    };
    assert_eq!(strip(json(&solo.join("report.json"))), strip(json(&out.join("runs/seed_11/report.json"))));
}

#[test]
fn divergence_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let o = train_sbm(&tmp.path().join("o"), &["--lr", "1e6", "--weight-decay", "0", "--residual", "false"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
}

#[test]
fn thread_variable_is_checked() {
    let o = Command::new(env!("CARGO_BIN_EXE_gsan"))
        .args(["validate", s(&fixture("toy"))])
        .env("GSAN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_gsan"))
        .args(["validate", s(&fixture("toy"))])
        .env("GSAN_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}
