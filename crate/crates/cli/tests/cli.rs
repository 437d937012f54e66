use std::path::Path;
use std::process::{Command, Output};

fn tendonsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tendonsim"))
        .current_dir(dir)
        .env_remove("TENDONSIM_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn error_line(out: &Output) -> String {
    stderr(out)
        .lines()
        .find(|l| l.starts_with("error kind="))
        .unwrap_or_else(|| panic!("no error line in {:?}", stderr(out)))
        .to_string()
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = tendonsim(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["datagen", "train-estimator", "eval-estimator", "rollout", "train-policy", "eval-policy", "eval", "validate-config", "smoke"] {
        assert!(text.contains(sub), "help lists {sub}");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tendonsim(dir.path(), &["datagen", "--out", "d", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("d").exists());
}

#[test]
fn negative_stiffness_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[systems.weak_spring]\nstiffness = -40.0\n").unwrap();
    let out = tendonsim(dir.path(), &["validate-config", "--kind", "datagen", "bad.toml"]);
    assert_eq!(out.status.code(), Some(4));
    let line = error_line(&out);
    assert!(line.contains("code=4") && line.contains("systems.weak_spring.stiffness"), "{line}");

    // Same file through datagen: rejected before anything is written.
    let out = tendonsim(dir.path(), &["datagen", "--config", "bad.toml", "--out", "data"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(!dir.path().join("data").exists());
    assert!(!dir.path().join("data.run.json").exists());
}

#[test]
fn unknown_config_key_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.toml"), "[ppo]\nnum_env = 4\n").unwrap();
    let out = tendonsim(dir.path(), &["validate-config", "--kind", "policy", "p.toml"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(error_line(&out).contains("num_env"));

    std::fs::write(dir.path().join("ok.toml"), "[ppo]\nnum_envs = 4\n").unwrap();
    let out = tendonsim(dir.path(), &["validate-config", "--kind", "policy", "ok.toml"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn missing_input_file_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = tendonsim(dir.path(), &["eval-policy", "--snapshot", "absent.bin", "--out", "s.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_line(&out).lines().count(), 1);
    assert!(!dir.path().join("s.csv").exists());
}

#[test]
fn experiment_without_model_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = tendonsim(dir.path(), &["eval", "--experiment", "gap", "--gain", "15", "--out", "gap"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out).contains("--model"));
    assert!(!dir.path().join("gap").exists());
}

#[test]
fn rollout_ideal_follows_the_command_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut traj = String::from("t,theta_d\n");
    for i in 0..40 {
        traj.push_str(&format!("{},{}\n", i as f64 * 0.05, if i < 10 { 0.0 } else { 1.0 }));
    }
    std::fs::write(dir.path().join("traj.csv"), traj).unwrap();
    let out = tendonsim(
        dir.path(),
        &["rollout", "--source", "ideal", "--gain", "15", "--traj", "traj.csv", "--out", "r.csv"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let mut reader = csv::Reader::from_path(dir.path().join("r.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 40);
    let get = |r: &csv::StringRecord, name: &str| r[col(name)].parse::<f64>().unwrap();
    // Ideal source: force is P·(θ_d − θ) clamped to [0, max].
    for r in &rows {
        let expected = (15.0 * (get(r, "theta_d") - get(r, "theta"))).clamp(0.0, 21.0);
        assert!((get(r, "force") - expected).abs() < 1e-9);
    }
    assert!(get(&rows[39], "theta") > 0.1);
    let run: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("r.csv.run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "rollout");
    assert!(run["output_hashes"]["r.csv"].as_str().unwrap().len() == 64);
}

#[test]
fn rollout_rejects_trajectory_without_theta_d() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("traj.csv"), "t,angle\n0,0\n").unwrap();
    let out = tendonsim(
        dir.path(),
        &["rollout", "--source", "surrogate", "--traj", "traj.csv", "--out", "r.csv"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(error_line(&out).contains("theta_d"));
}

#[test]
fn estimator_pipeline_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("data.toml"), "[datagen]\nepisode_seconds = 20.0\n").unwrap();
    let out = tendonsim(d, &["--seed", "3", "datagen", "--config", "data.toml", "--minutes", "2", "--out", "data"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(d.join("data/manifest.json").exists());
    assert!(d.join("data.run.json").exists());

    let out = tendonsim(
        d,
        &["train-estimator", "--arch", "mlp", "--data", "data", "--out", "mlp.bin", "--epochs", "1", "--windows-per-epoch", "256"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(d.join("mlp.bin.curve.csv").exists());

    let out = tendonsim(d, &["eval-estimator", "--model", "mlp.bin", "--data", "data", "--report", "report.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(d.join("report.csv")).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("all,"), "{last}");
    let run: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("report.csv.run.json")).unwrap()).unwrap();
    assert_eq!(run["inputs"].as_object().unwrap().len(), 2);
    let data_run: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("data.run.json")).unwrap()).unwrap();
    assert!(data_run["inputs"]["data.toml"].is_string());

    let out = tendonsim(d, &["eval", "--experiment", "gap", "--data", "data", "--model", "mlp.bin", "--out", "gap"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("gap/summary.json")).unwrap()).unwrap();
    assert!(summary["summary"]["rmse_mm/ideal"].as_f64().unwrap() > 0.0);
}

fn without_wall_clock(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("wall_clock_s");
    v
}

#[test]
fn smoke_twice_gives_identical_manifests() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = tendonsim(dir.path(), &["--seed", "7", "smoke", "--out", "smoke"]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let inner_a = std::fs::read(a.path().join("smoke/manifest.json")).unwrap();
    let inner_b = std::fs::read(b.path().join("smoke/manifest.json")).unwrap();
    assert_eq!(inner_a, inner_b);
    assert_eq!(
        without_wall_clock(&a.path().join("smoke.run.json")),
        without_wall_clock(&b.path().join("smoke.run.json"))
    );
    let inner: serde_json::Value = serde_json::from_slice(&inner_a).unwrap();
    let files = inner["files"].as_object().unwrap();
    for name in ["transformer.bin", "policy.bin", "estimator_report.csv", "stairs.csv", "gap/summary.json", "data/manifest.json"] {
        assert!(files.contains_key(name), "manifest lists {name}");
    }
}
