use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_rlvr-lab");

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = "[scenario]\ngenerator = \"difficulty_preset\"\nseed = 3\n\n[trainer]\nalgorithm = \"grpo\"\nhorizon = 300\n";

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let out = dir.path().join("out");
    let st = Command::new(BIN)
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--format", "csv,json,svg"])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    for f in ["trajectory.csv", "summary.json", "j_mean.svg", "bound_slack.svg"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 301);
}

#[test]
fn out_env_is_default_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let root = dir.path().join("envroot");
    let st = Command::new(BIN).args(["run", "--config"]).arg(&cfg).env("RLVR_LAB_OUT", &root).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(root.join("summary.json").is_file());
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let mut bodies = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(seed);
        let st = Command::new(BIN).args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).args(["--seed", seed]).status().unwrap();
        assert_eq!(st.code(), Some(0));
        bodies.push(std::fs::read(out.join("trajectory.csv")).unwrap());
    }
    assert_ne!(bodies[0], bodies[1]);
}

#[test]
fn unknown_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[scenario]\ngenerator = \"orthogonal_blocks\"\n\n[trainer]\nalgoritm = \"grpo\"\n");
    let o = Command::new(BIN).args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("algoritm") && err.contains("algorithm"), "{err}");
}

#[test]
fn missing_config_is_io_error() {
    let st = Command::new(BIN).args(["run", "--config", "/nonexistent/x.toml"]).status().unwrap();
    assert_eq!(st.code(), Some(1));
}

#[test]
fn overflow_exits_with_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "nan.toml",
        "[scenario]\ngenerator = \"orthogonal_blocks\"\nn = 1\nk = 2\nblock_dim = 1\nscale = 1000.0\n\n[trainer]\nalgorithm = \"reinforce\"\nstep_rule = \"manual\"\neta = 1e308\nhorizon = 5\n",
    );
    let st = Command::new(BIN).args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).status().unwrap();
    assert_eq!(st.code(), Some(3));
}

#[test]
fn sweep_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let out = dir.path().join("sw");
    let o = Command::new(BIN)
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--seeds", "0..3", "--algorithms", "reinforce,grpo"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("sweep.json").is_file());
    assert!(out.join("grpo-seed2").join("summary.json").is_file());
    assert!(String::from_utf8_lossy(&o.stdout).contains("grpo wins"));
}

#[test]
fn export_then_diagnose_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "o.toml", "[scenario]\ngenerator = \"orthogonal_blocks\"\nn = 4\n\n[trainer]\nalgorithm = \"grpo\"\nhorizon = 10\n");
    let inst = dir.path().join("inst.json");
    let st = Command::new(BIN).args(["export-instance", "--config"]).arg(&cfg).arg("--out").arg(&inst).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let o = Command::new(BIN).args(["diagnose", "--json", "--instance"]).arg(&inst).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["m_bound"]["status"], "vacuous");
}

#[test]
fn diagnose_flags_interference() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(
        dir.path(),
        "anti.json",
        r#"{"format":1,"n":2,"k":2,"d":2,"correct":[0,1],"features":[[1,0,0,1],[1,0,0,1]]}"#,
    );
    let st = Command::new(BIN).args(["diagnose", "--instance"]).arg(&inst).status().unwrap();
    assert_eq!(st.code(), Some(5));
}

#[test]
fn verify_subset_and_unknown_id() {
    let o = Command::new(BIN).args(["verify", "--criteria", "1,12"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).matches("PASS").count(), 2);
    let st = Command::new(BIN).args(["verify", "--criteria", "99"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            rlvr_expcli::config::ExperimentConfig::from_path(&path).unwrap_or_else(|e| panic!("{e}"));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
