use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const REFERENCE: &str = "((0.7(((0.4(f1,{1})+0.6(f2,{1})))x(f3,{2}))+0.3((f4,{1})x(f5,{2}))),{1,2})";

fn spn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spn")).args(args).env_remove("SPN_SEED").output().unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = spn(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write_reference(dir: &Path) -> String {
    let leaves = [[0.2, 0.5, 0.3], [0.6, 0.3, 0.1], [0.1, 0.1, 0.8], [0.3, 0.3, 0.4], [0.5, 0.25, 0.25]];
    let mut map = serde_json::Map::new();
    for (i, p) in leaves.iter().enumerate() {
        map.insert(format!("f{}", i + 1), serde_json::json!({"type": "categorical", "params": {"probs": p}}));
    }
    let model = serde_json::json!({"signature": REFERENCE, "n": 2, "leaves": map});
    let path = dir.join("reference.json");
    fs::write(&path, model.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn path_str(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn validate_reports_counts() {
    let v = ok_json(&["validate", "--signature", REFERENCE, "--n", "2"]);
    assert_eq!(v, serde_json::json!({"e": 5, "k": 4, "n": 2, "depth": 3}));
}

#[test]
fn validate_reads_files() {
    let dir = tempfile::tempdir().unwrap();
    let sig = path_str(dir.path(), "sig.txt");
    fs::write(&sig, format!("{REFERENCE}\n")).unwrap();
    assert_eq!(ok_json(&["validate", "--sig", &sig, "--n", "2"])["e"], 5);
}

#[test]
fn tv_of_a_model_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_reference(dir.path());
    let v = ok_json(&["tv", "--a", &m, "--b", &m, "--exact"]);
    assert_eq!(v["estimate"], 0.0);
    assert_eq!(v["method"], "exact");
    let v = ok_json(&["tv", "--a", &m, "--b", &m, "--mc", "--samples", "2000", "--seed", "3"]);
    assert_eq!(v["estimate"], 0.0);
}

#[test]
fn compress_decompress_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_reference(dir.path());
    let msg = path_str(dir.path(), "m.spnc");
    let dec = path_str(dir.path(), "decoded.json");
    let summary = ok_json(&["compress", "--model", &m, "--eps", "0.3", "--out", &msg]);
    assert_eq!(summary["points"], 0);
    assert!(summary["bits"].as_u64().unwrap() <= summary["bit_budget"].as_u64().unwrap());
    let out = spn(&["decompress", "--structure", &m, "--eps", "0.3", "--in", &msg, "--out", &dec]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tv = ok_json(&["tv", "--a", &m, "--b", &dec, "--exact"])["estimate"].as_f64().unwrap();
    assert!(tv <= 0.3, "tv {tv}");
    let sim = ok_json(&["similarity", "--a", &m, "--b", &dec]);
    assert_eq!(sim["is_same_structure"], true);
    assert!(tv <= sim["tv_bound"].as_f64().unwrap() + 1e-12);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_reference(dir.path());
    let a = spn(&["sample", "--model", &m, "--count", "50", "--seed", "5"]);
    let b = spn(&["sample", "--model", &m, "--count", "50", "--seed", "5"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let env = Command::new(env!("CARGO_BIN_EXE_spn"))
        .args(["sample", "--model", &m, "--count", "50"])
        .env("SPN_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(env.stdout, a.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("x1,x2,leaf_path\n"));
    assert_eq!(text.lines().count(), 51);

    let (p, q) = (path_str(dir.path(), "p.spnc"), path_str(dir.path(), "q.spnc"));
    for out in [&p, &q] {
        ok_json(&["compress", "--model", &m, "--eps", "0.1", "--out", out]);
    }
    assert_eq!(fs::read(&p).unwrap(), fs::read(&q).unwrap());
}

#[test]
fn exit_codes() {
    let bad = spn(&["validate", "--signature", "((f1,{1})", "--n", "1"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));
    assert_eq!(spn(&["stats", "--model", "/nonexistent/model.json"]).status.code(), Some(1));
    assert_eq!(spn(&["validate", "--bogus"]).status.code(), Some(2));
    assert_eq!(spn(&["tv", "--a", "x", "--b", "y"]).status.code(), Some(2));
    assert_eq!(spn(&["--help"]).status.code(), Some(0));
}

#[test]
fn damaged_message_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_reference(dir.path());
    let msg = path_str(dir.path(), "m.spnc");
    ok_json(&["compress", "--model", &m, "--eps", "0.3", "--out", &msg]);
    let mut bytes = fs::read(&msg).unwrap();
    bytes.push(0);
    fs::write(&msg, bytes).unwrap();
    let dec = path_str(dir.path(), "d.json");
    let out = spn(&["decompress", "--structure", &m, "--eps", "0.3", "--in", &msg, "--out", &dec]);
    assert_eq!(out.status.code(), Some(1));
    // a mismatched accuracy changes the layout
    let out = spn(&["decompress", "--structure", &m, "--eps", "0.1", "--in", &msg, "--out", &dec]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn learn_from_sampled_csv() {
    let dir = tempfile::tempdir().unwrap();
    let model = path_str(dir.path(), "mix.json");
    fs::write(
        &model,
        r#"{"signature":"((0.25(f1,{1})+0.75(f2,{1})),{1})","n":1,"leaves":{
            "f1":{"type":"categorical","params":{"probs":[1.0,0.0]}},
            "f2":{"type":"categorical","params":{"probs":[0.0,1.0]}}}}"#,
    )
    .unwrap();
    let csv = path_str(dir.path(), "s.csv");
    let learned = path_str(dir.path(), "learned.json");
    assert!(spn(&["sample", "--model", &model, "--count", "400", "--seed", "2", "--out", &csv]).status.success());
    let summary = ok_json(&[
        "learn", "--structure", &model, "--samples", &csv, "--eps", "1.2", "--delta", "0.1", "--out", &learned,
    ]);
    assert_eq!(summary["sample_count"], 400);
    assert!(summary["candidate_count"].as_u64().unwrap() > 1);
    let tv = ok_json(&["tv", "--a", &model, "--b", &learned, "--exact"])["estimate"].as_f64().unwrap();
    assert!(tv <= 0.2, "tv {tv}");
}

#[test]
fn scaling_experiment_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = path_str(dir.path(), "cfg.json");
    fs::write(
        &config,
        r#"{"structures":[{"id":"leaf","model":{"signature":"(f1,{1})","n":1,
            "leaves":{"f1":{"type":"categorical","params":{"probs":[0.25,0.75]}}}}}],
            "eps_grid":[0.2],"m_grid":[10,40],"trials":3,"seed_base":1,"cap":100000,"grid_eps":1.5}"#,
    )
    .unwrap();
    let out = path_str(dir.path(), "rows.csv");
    let run = spn(&["experiment", "scaling", "--config", &config, "--out", &out]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("structure_id,e,k,n,depth,eps,m,trial,tv_error,success"));
    assert_eq!(text.lines().count(), 1 + 2 * 3);
}

#[test]
fn stats_lists_path_weights() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_reference(dir.path());
    let v = ok_json(&["stats", "--model", &m, "--eps", "0.3"]);
    let pw: Vec<f64> = serde_json::from_value(v["path_weights"].clone()).unwrap();
    let expect = [0.28, 0.42, 0.7, 0.3, 0.3];
    assert!(pw.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-12));
    let d = ok_json(&["density", "--model", &m, "--point", "0,2"]);
    let want = 0.7 * (0.4 * 0.2 + 0.6 * 0.6) * 0.8 + 0.3 * 0.3 * 0.25;
    assert!((d["density"].as_f64().unwrap() - want).abs() < 1e-12);
}
