use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], cwd: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_seqembed"));
    cmd.args(args).current_dir(cwd).env_remove("SEQEMBED_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn stderr_line(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).trim().to_string()
}

#[test]
fn help_and_version_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--help"], tmp.path(), &[]).status.code(), Some(0));
    assert_eq!(run(&["--version"], tmp.path(), &[]).status.code(), Some(0));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["frobnicate"], tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr_line(&o);
    assert!(err.starts_with("error[usage]:"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn missing_input_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        &["embed", "--model", "nope.json", "--data", "nope", "--out", "o"],
        tmp.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr_line(&o).starts_with("error[data]:"));
}

#[test]
fn unknown_config_key_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    assert!(run(&["gen", "--preset", "circle-ellipse", "--out", "d"], root, &[]).status.success());
    std::fs::write(
        root.join("c.json"),
        r#"{"version": 1, "train": {"model": {"input_dim": 2, "hidden_dim": 4, "encoder_steps": 5,
            "decoder_steps": 5, "learning_rat": 0.01}, "iterations": 3}}"#,
    )
    .unwrap();
    let o = run(&["train", "--config", "c.json", "--data", "d", "--out", "r"], root, &[]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(root.join("v.json"), r#"{"version": 9, "train": {}}"#).unwrap();
    let o = run(&["train", "--config", "v.json", "--data", "d", "--out", "r"], root, &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_seed_env_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        &["gen", "--preset", "circle-ellipse", "--out", "d"],
        tmp.path(),
        &[("SEQEMBED_SEED", "abc")],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_flag_beats_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let env = [("SEQEMBED_SEED", "11")];
    assert!(run(&["gen", "--preset", "multiclass", "--out", "a"], root, &env).status.success());
    assert!(run(&["gen", "--preset", "multiclass", "--seed", "4", "--out", "b"], root, &env).status.success());
    assert_eq!(manifest(&root.join("a"))["seed"], 11);
    assert_eq!(manifest(&root.join("b"))["seed"], 4);
}

#[test]
fn manifest_records_inputs_and_rerun_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    assert!(run(&["gen", "--preset", "concat", "--classes", "2", "--steps", "60", "--out", "g"], root, &[])
        .status
        .success());
    let m = manifest(&root.join("g"));
    assert_eq!(m["command"], "gen");
    assert_eq!(m["schema"], 1);
    assert!(m["outputs"].as_array().unwrap().iter().any(|o| o.as_str().unwrap().ends_with("long.csv")));
    assert!(run(&["rerun", "--manifest", "g/manifest.json", "--out", "h"], root, &[]).status.success());
    for f in ["long.csv", "truth.csv"] {
        assert_eq!(
            std::fs::read(root.join("g").join(f)).unwrap(),
            std::fs::read(root.join("h").join(f)).unwrap()
        );
    }
}
