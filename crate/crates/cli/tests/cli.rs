use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circuitlearn"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn parity_file(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("gen");
    let o = run(&out, &["circuit", "gen", "--kind", "parity", "--depth", "2", "--relevant", "0,2"]);
    assert_eq!(o.status.code(), Some(0));
    out.join("circuit.json")
}

#[test]
fn eval_parity_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = parity_file(dir.path());
    let out = dir.path().join("eval");
    let o = run(&out, &["circuit", "eval", "--circuit", circuit.to_str().unwrap(), "--x", "-1,1,1,-1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "-1");
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["command"], "circuit eval");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 1);
    assert_eq!(m["outputs"][0]["path"], "eval.json");
    assert_eq!(m["status"], "ok");
}

#[test]
fn eval_with_wrong_length_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = parity_file(dir.path());
    let o = run(&dir.path().join("eval"), &["circuit", "eval", "--circuit", circuit.to_str().unwrap(), "--x", "1,1,1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_and_bad_scope_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["circuit", "bogus"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["verify", "lemmas", "--scope", "nope"]).status.code(), Some(2));
}

#[test]
fn lemma_suite_passes_at_depth_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "lemmas", "--scope", "all", "--depth", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let verdicts = read_json(&dir.path().join("verdicts.json"));
    let verdicts = verdicts.as_array().unwrap();
    assert!(!verdicts.is_empty());
    assert!(verdicts.iter().all(|v| v["pass"] == true));
}

#[test]
fn failing_certificate_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = parity_file(dir.path());
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, json!({"kind": "product", "p": [0.75, 0.75, 0.75, 0.75]}).to_string()).unwrap();
    let args = ["dist", "certify", "--spec", spec.to_str().unwrap(), "--circuit", circuit.to_str().unwrap()];
    let ok = run(&dir.path().join("a"), &args);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let mut strict = args.to_vec();
    strict.extend(["--delta", "0.45"]);
    let o = run(&dir.path().join("b"), &strict);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(read_json(&dir.path().join("b/manifest.json"))["status"], "verification_failed");
}

#[test]
fn uniform_baseline_stays_near_half() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["--seed", "7", "train", "baseline", "--p", "0.5", "--iters", "2000", "--eval-every", "500", "--test-size", "2000"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("baseline.json"));
    for point in r["curve"].as_array().unwrap() {
        let acc = point[1].as_f64().unwrap();
        assert!((0.44..=0.60).contains(&acc), "accuracy {acc}");
    }
    let csv = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("iteration,accuracy"));
    assert_eq!(csv.lines().count(), 1 + 5);
}

#[test]
fn train_then_verify_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    assert!(run(&gen, &["--seed", "3", "circuit", "gen", "--kind", "random", "--depth", "3"]).status.success());
    let spec = dir.path().join("spec.json");
    let circuit = read_json(&gen.join("circuit.json"));
    std::fs::write(&spec, json!({"kind": "generative", "circuit": circuit}).to_string()).unwrap();
    let spec = spec.to_str().unwrap();

    let train = dir.path().join("train");
    let o = run(&train, &["train", "layerwise", "--spec", spec]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(&train.join("recovery.json"))["error"], 0.0);

    let net = train.join("checkpoint.json");
    let o = run(&dir.path().join("verify"), &["verify", "recovery", "--net", net.to_str().unwrap(), "--spec", spec]);
    assert_eq!(o.status.code(), Some(0));

    // Replaying the manifest reproduces the checkpoint.
    let manifest = train.join("manifest.json");
    let replay = dir.path().join("replay");
    let o = run(&replay, &["--config", manifest.to_str().unwrap(), "train", "layerwise", "--spec", spec]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&net).unwrap(), std::fs::read(replay.join("checkpoint.json")).unwrap());
}

#[test]
fn config_file_sets_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, json!({"seed": 5, "rankbound": {"count": 7, "max_half_dim": 3}}).to_string()).unwrap();
    let out = dir.path().join("rank");
    let o = run(&out, &["--config", cfg.to_str().unwrap(), "verify", "rankbound", "--max-width", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let entries = read_json(&out.join("rankbound.json"));
    assert_eq!(entries.as_array().unwrap().len(), 7);
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["rankbound"]["max_width"], 4);
    assert_eq!(m["config"]["rankbound"]["max_half_dim"], 3);
}

#[test]
fn report_merges_baseline_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base");
    let o = run(
        &base,
        &["train", "baseline", "--seeds", "1,2", "--iters", "200", "--eval-every", "100", "--test-size", "200"],
    );
    assert_eq!(o.status.code(), Some(0));
    let report = dir.path().join("report");
    let a = base.join("baseline_seed1.json");
    let b = base.join("baseline_seed2.json");
    let o = run(&report, &["report", "render", "--input", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(report.join("curves.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iteration,p0.5_seed1,p0.5_seed2"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn rankbound_output_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&a, &["--threads", "1", "verify", "rankbound", "--count", "25"]).status.success());
    assert!(run(&b, &["--threads", "4", "verify", "rankbound", "--count", "25"]).status.success());
    assert_eq!(
        std::fs::read(a.join("rankbound.json")).unwrap(),
        std::fs::read(b.join("rankbound.json")).unwrap()
    );
}
