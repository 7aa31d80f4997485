use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gmbound"));
    c.env("RUST_LOG", "warn")
        .env_remove("GMBOUND_SEED")
        .env_remove("GMBOUND_OUT_DIR");
    c
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const MAX_BOUND: &str = r#"{
  "dataset": {"source": "toy", "kind": "TWO_MOONS", "n": 300},
  "loss": "max_bound",
  "model": {"hidden": [16, 16]},
  "variances": {"v_x": 0.01, "v_y": 0.01},
  "iterations": 20, "batch_size": 64, "seed": 4, "log_every": 10,
  "eval": {"n": 200},
  "heatmap_resolution": 12
}"#;

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", MAX_BOUND);
    let out = dir.path().join("out");
    let stdout = ok(bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap());
    assert!(stdout.contains("max_bound"));
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(
        lines[0],
        "iteration,cost,bound,inner,q_norm,shannon_mi,renyi_mi"
    );
    assert_eq!(lines.len(), 4, "iterations 0, 10, 20");
    assert!(out.join("checkpoint.json").exists());
    assert!(out.join("config.json").exists());
    let heat = std::fs::read_to_string(out.join("heatmap.csv")).unwrap();
    assert_eq!(heat.lines().count(), 1 + 144);

    // The heatmap subcommand reproduces the run's heatmap from the checkpoint.
    let again = dir.path().join("h.csv");
    ok(bin()
        .args(["heatmap", "--resolution", "12", "--checkpoint"])
        .arg(out.join("checkpoint.json"))
        .arg("--output")
        .arg(&again)
        .output()
        .unwrap());
    assert_eq!(std::fs::read_to_string(again).unwrap(), heat);
}

#[test]
fn environment_overrides_seed_and_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", MAX_BOUND);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .env("GMBOUND_OUT_DIR", &a)
        .output()
        .unwrap());
    ok(bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .env("GMBOUND_OUT_DIR", &b)
        .env("GMBOUND_SEED", "99")
        .output()
        .unwrap());
    let ma = std::fs::read(a.join("metrics.csv")).unwrap();
    let mb = std::fs::read(b.join("metrics.csv")).unwrap();
    assert_ne!(ma, mb);
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(b.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 99);
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing_var = write(
        dir.path(),
        "bad.json",
        r#"{"dataset": {"source": "toy", "kind": "MIX1"}, "loss": "cond_nip",
            "variances": {"v_x": 0.01}, "iterations": 5, "batch_size": 8, "seed": 1}"#,
    );
    let out = bin()
        .args(["run", "--out"])
        .arg(dir.path())
        .arg("--config")
        .arg(&missing_var)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("v_y"));

    let out = bin()
        .args(["run", "--config"])
        .arg(dir.path().join("nope.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    let out = bin()
        .args(["griddensity", "--dataset", "UNIFORM5D"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("2-D"));
}

#[test]
fn runs_continue_from_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", MAX_BOUND);
    let first = dir.path().join("first");
    ok(bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&first)
        .output()
        .unwrap());
    let mut v: serde_json::Value = serde_json::from_str(MAX_BOUND).unwrap();
    v["init_checkpoint"] = serde_json::json!(first.join("checkpoint.json"));
    v["loss"] = serde_json::json!("s_mi");
    let cont = write(dir.path(), "cont.json", &v.to_string());
    let second = dir.path().join("second");
    ok(bin()
        .args(["run", "--config"])
        .arg(&cont)
        .arg("--out")
        .arg(&second)
        .output()
        .unwrap());
    // The continued run starts where the first one stopped.
    let m1 = std::fs::read_to_string(first.join("metrics.csv")).unwrap();
    let m2 = std::fs::read_to_string(second.join("metrics.csv")).unwrap();
    let last1: Vec<&str> = m1.lines().last().unwrap().split(',').collect();
    let first2: Vec<&str> = m2.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(last1[2], first2[2], "bound at the hand-over");

    // A checkpoint whose shapes do not match is refused.
    v["model"]["hidden"] = serde_json::json!([8]);
    let wrong = write(dir.path(), "wrong.json", &v.to_string());
    let out = bin()
        .args(["run", "--config"])
        .arg(&wrong)
        .arg("--out")
        .arg(dir.path().join("w"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn griddensity_writes_maps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let stdout = ok(bin()
        .args([
            "griddensity",
            "--dataset",
            "mog5",
            "--grid",
            "8",
            "--y-points",
            "60",
            "--iterations",
            "15",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap());
    assert!(stdout.contains("final objective"));
    assert_eq!(
        std::fs::read_to_string(out.join("features.csv"))
            .unwrap()
            .lines()
            .count(),
        65
    );
    assert_eq!(
        std::fs::read_to_string(out.join("reconstruction_density.csv"))
            .unwrap()
            .lines()
            .count(),
        65
    );
}
