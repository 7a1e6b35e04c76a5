use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_attractor-lab"))
}

fn manifest(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("manifests").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const SMALL_RDS: &str = r#"
[system]
solver = "rds"
modes = 16
dt = 0.01
sample_dt = 0.05
"#;

#[test]
fn empty_pipeline_echoes_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("empty");
    let o = run(&["run", manifest("empty.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec!["manifest.toml"]);
    let echo = attractor_cli::ExperimentManifest::load(&out.join("manifest.toml")).unwrap();
    let original = attractor_cli::ExperimentManifest::load(&manifest("empty.toml")).unwrap();
    assert_eq!(echo, original);
}

#[test]
fn singleton_attractor_tracks_and_reruns_from_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let m = manifest("singleton-attractor.toml");
    let o = run(&["run", m.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let tracking = json(&out.join("verify_tracking/tracking.json"));
    assert_eq!(tracking["result"]["pass"], Value::Bool(true));
    assert_eq!(tracking["result"]["net_size"], 1);
    let report = json(&out.join("report.json"));
    assert_eq!(report["verification_pass"], Value::Bool(true));
    let hash = report["manifest_hash"].as_str().unwrap().to_string();
    for stage in ["simulate", "harvest", "build_net", "verify_tracking", "schedule", "equicontinuity", "section_check"] {
        let rec = json(&out.join(stage).join("stage.json"));
        for r in rec["reports"].as_array().unwrap() {
            let rep = json(&out.join(stage).join(r.as_str().unwrap()));
            assert_eq!(rep["manifest_hash"].as_str(), Some(hash.as_str()), "{stage}");
            assert!(rep["disclaimer"].is_string());
            assert!(rep["tolerances"].is_object());
            assert!(rep["horizons"].is_object());
        }
    }
    let first = tree(&out);

    let again = run(&["run", m.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(stdout(&again).matches("cached").count(), 7, "{}", stdout(&again));
    assert_eq!(tree(&out), first);

    let fresh = tmp.path().join("fresh");
    let o = run(&["--workers", "1", "run", m.to_str().unwrap(), "--out", fresh.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(tree(&fresh), first);
}

#[test]
fn changing_one_stage_recomputes_only_downstream() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let m = manifest("singleton-attractor.toml");
    assert_eq!(run(&["run", m.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let o = run(&["build-net", m.to_str().unwrap(), "--out", out.to_str().unwrap(), "--epsilon", "0.01"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("[simulate] cached"), "{s}");
    assert!(s.contains("[harvest] cached"), "{s}");
    assert!(s.contains("[build_net] done"), "{s}");
    let net = json(&out.join("build_net/build_net.json"));
    assert_eq!(net["result"]["epsilon"], 0.01);
}

#[test]
fn tracking_failure_exits_3_and_keeps_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let o = run(&[
        "verify-tracking",
        manifest("singleton-attractor.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--t0",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stdout(&o).contains("tracking: FAIL"));
    let tracking = json(&out.join("verify_tracking/tracking.json"));
    assert_eq!(tracking["result"]["pass"], Value::Bool(false));
    assert!(out.join("verify_tracking/tracking.csv").exists());
}

#[test]
fn corrupted_manifest_fails_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, format!("{SMALL_RDS}\n[pipeline.simulate\nruns = 2\n")).unwrap();
    let o = run(&["run", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 8"), "{}", stderr(&o));
    assert!(!out.exists());

    fs::write(&bad, format!("{SMALL_RDS}\n[symbol]\nforce = \"sawtooth\"\n[pipeline.simulate]\n")).unwrap();
    let o = run(&["run", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("symbol.force"), "{}", stderr(&o));
    assert!(!out.exists());

    fs::write(&bad, format!("{SMALL_RDS}\n[pipeline.simulate]\nrusn = 2\n")).unwrap();
    let o = run(&["run", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rusn"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn zero_absorbing_radius_needs_explicit_norm() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("m.toml");
    fs::write(&m, format!("{SMALL_RDS}\n[symbol]\nnonlinearity = \"linear\"\n[pipeline.simulate]\n")).unwrap();
    let o = run(&["run", m.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("pipeline.simulate.norm"), "{}", stderr(&o));
}

#[test]
fn solver_failure_exits_2_with_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("blow.toml");
    fs::write(
        &m,
        format!(
            "{SMALL_RDS}\n[symbol]\nnonlinearity_expr = \"-v*v*v\"\n\
             constants = {{ p = 4.0, gamma = 1.0, c_diss = 0.0, c_grow = 1.0 }}\n\
             [pipeline.simulate]\nruns = 2\nnorm = 20.0\nhorizon = 5.0\n"
        ),
    )
    .unwrap();
    let out = tmp.path().join("o");
    let o = run(&["simulate", m.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(out.join("manifest.toml").exists());
    assert!(out.join("simulate").is_dir());
    assert!(!out.join("simulate/stage.json").exists());
}

#[test]
fn classify_force_on_the_constant_force() {
    let o = run(&["classify-force", manifest("constant-force.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("normal: yes (defect table attached)"), "{}", stdout(&o));
}

#[test]
fn classify_force_without_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("spike");
    let o = run(&["classify-force", "--force", "spike_train", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("normal: no"));
    let rep = json(&out.join("classify_force/force.json"));
    assert_eq!(rep["horizons"]["probe_horizon"], 1000.0);
    assert!(rep["disclaimer"].as_str().unwrap().starts_with("sampled"));
    let csv = fs::read_to_string(out.join("classify_force/defects.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
}

#[test]
fn classify_nonlinearity_on_example1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ex1");
    let o = run(&[
        "classify-nonlinearity",
        manifest("example1.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("equicontinuity: FAIL (θ table attached)"), "{}", stdout(&o));
    let theta = fs::read_to_string(out.join("classify_nonlinearity/theta.csv")).unwrap();
    assert_eq!(theta.lines().count(), 11);
}

#[test]
fn verify_tracking_rejects_a_net_from_another_basis() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let m = manifest("singleton-attractor.toml");
    assert_eq!(run(&["build-net", m.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let other = tmp.path().join("other.toml");
    fs::write(&other, fs::read_to_string(&m).unwrap().replace("modes = 16", "modes = 12")).unwrap();
    let net = out.join("build_net/net.json");
    let o = run(&[
        "verify-tracking",
        other.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
        "--net",
        net.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("basis mismatch"), "{}", stderr(&o));
    assert!(!tmp.path().join("o").exists());

    // the same basis accepts the foreign net
    let o = run(&[
        "verify-tracking",
        m.to_str().unwrap(),
        "--out",
        tmp.path().join("same").to_str().unwrap(),
        "--net",
        net.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("tracking: PASS"));
}

#[test]
fn unknown_flags_are_rejected() {
    let o = run(&["simulate", manifest("singleton-attractor.toml").to_str().unwrap(), "--bogus", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--bogus"));
}

#[test]
fn help_documents_units() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("model time"));
    let o = run(&["harvest", "--help"]);
    assert!(stdout(&o).contains("model time units"));
}

#[test]
fn report_summarizes_existing_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let m = manifest("singleton-attractor.toml");
    assert_eq!(run(&["equicontinuity", m.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let o = run(&["report", m.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(&out.join("report.json"));
    assert_eq!(report["stages"].as_array().unwrap().len(), 3);
    let o = run(&["report", m.to_str().unwrap(), "--out", tmp.path().join("none").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
