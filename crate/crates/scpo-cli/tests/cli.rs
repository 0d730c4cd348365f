//! End-to-end contract tests for the `scpo` binary: exit codes, run-directory
//! layout, and CSV outputs.

use std::path::{Path, PathBuf};
use std::process::Command;

fn scpo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scpo"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("scpo-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_tiny_training(out: &Path, run_id: &str, seed: u64) -> std::process::Output {
    scpo()
        .args([
            "train",
            "--env",
            "point_run",
            "--run-id",
            run_id,
            "--seed",
            &seed.to_string(),
            "--iterations",
            "2",
            "--timesteps",
            "256",
            "--out",
        ])
        .arg(out)
        .env_remove("SCPO_OUT_DIR")
        .output()
        .unwrap()
}

#[test]
fn verify_exit_codes() {
    let out = temp_dir("verify");
    let ok = scpo()
        .args(["verify", "--suite", "toys", "--out"])
        .arg(&out)
        .env_remove("SCPO_OUT_DIR")
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let report = std::fs::read_to_string(out.join("toys_report.csv")).unwrap();
    assert!(report.starts_with("check,seed,value,pass\n"));
    assert!(report.lines().count() > 10);

    let bad = scpo()
        .args(["verify", "--suite", "nonsense"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    std::fs::remove_dir_all(&out).unwrap();
}

#[test]
fn train_writes_manifest_metrics_and_checkpoint() {
    let out = temp_dir("train");
    let run = run_tiny_training(&out, "tiny", 3);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let dir = out.join("tiny");
    let manifest = std::fs::read_to_string(dir.join("manifest.toml")).unwrap();
    assert!(manifest.contains("run_id = \"tiny\""));
    assert!(manifest.contains("artifact_hash"));
    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iteration,env_steps,mean_return,mean_cost,cost_std,vc_loss,value_loss,surrogate_loss,entropy"
    );
    assert_eq!(metrics.lines().count(), 3, "one row per iteration");
    assert!(dir.join("final.ckpt").exists());

    // Reusing the run id is refused.
    let dup = run_tiny_training(&out, "tiny", 3);
    assert_eq!(dup.status.code(), Some(2));
    std::fs::remove_dir_all(&out).unwrap();
}

#[test]
fn train_requires_a_task() {
    let none = scpo().arg("train").output().unwrap();
    assert_eq!(none.status.code(), Some(2));

    // A config file with an unknown field is a usage error, named in stderr.
    let out = temp_dir("badcfg");
    let cfg = out.join("bad.toml");
    std::fs::write(&cfg, "nonsense_field = 3\n").unwrap();
    let bad = scpo()
        .args(["train", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("nonsense_field"));
    std::fs::remove_dir_all(&out).unwrap();
}

#[test]
fn eval_round_trip_and_error_paths() {
    let out = temp_dir("eval");
    let run = run_tiny_training(&out, "for-eval", 5);
    assert!(run.status.success());
    let ckpt = out.join("for-eval/final.ckpt");

    let ok = scpo()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .args(["--env", "point_run", "--episodes", "3", "--seed", "9", "--out"])
        .arg(&out)
        .env_remove("SCPO_OUT_DIR")
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("mean_return"));
    assert!(stdout.contains("safe_fraction"));
    let csv = std::fs::read_to_string(out.join("eval-point_run-9.csv")).unwrap();
    assert!(csv.starts_with("episodes,mean_return,mean_cost,cost_std,safe_fraction\n"));

    // Zero episodes is a usage error.
    let zero = scpo()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .args(["--env", "point_run", "--episodes", "0"])
        .output()
        .unwrap();
    assert_eq!(zero.status.code(), Some(2));

    // Evaluating against a different environment is refused.
    let mismatch = scpo()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .args(["--env", "cart_safe", "--episodes", "1"])
        .output()
        .unwrap();
    assert_eq!(mismatch.status.code(), Some(2));
    std::fs::remove_dir_all(&out).unwrap();
}

#[test]
fn numeric_abort_dumps_a_checkpoint_and_exits_3() {
    let out = temp_dir("abort");
    let cfg = out.join("explode.toml");
    std::fs::write(
        &cfg,
        r#"
run_id = "explode"
env = "point_run"
mode = "scpo"
k = 4
beta = 0.5
reward_bias_b = 1.0
clip_epsilon = 0.2
entropy_coef = 0.005
batch_size = 64
epochs_per_iter = 5
timesteps = 512
iterations = 6
gamma = 0.99
gae_lambda = 0.95
safety_gamma = 0.995
learning_rate = 1e8
estimator = "L1"
seed = 1
"#,
    )
    .unwrap();
    let run = scpo()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env_remove("SCPO_OUT_DIR")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(3));
    let dir = out.join("explode");
    assert!(dir.join("abort.ckpt").exists());
    // A killed or aborted run still leaves a parsable metrics prefix.
    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("iteration,"));
    std::fs::remove_dir_all(&out).unwrap();
}

#[test]
fn out_dir_env_var_overrides_flag() {
    let flag_dir = temp_dir("flag");
    let env_dir = temp_dir("envvar");
    let run = scpo()
        .args([
            "train",
            "--env",
            "point_run",
            "--run-id",
            "redirected",
            "--iterations",
            "1",
            "--timesteps",
            "128",
            "--out",
        ])
        .arg(&flag_dir)
        .env("SCPO_OUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(run.status.success());
    assert!(env_dir.join("redirected").exists());
    assert!(!flag_dir.join("redirected").exists());
    std::fs::remove_dir_all(&flag_dir).unwrap();
    std::fs::remove_dir_all(&env_dir).unwrap();
}

#[test]
fn verify_report_bytes_are_reproducible() {
    let a = temp_dir("rep-a");
    let b = temp_dir("rep-b");
    for dir in [&a, &b] {
        let out = scpo()
            .args(["verify", "--suite", "gradcheck", "--out"])
            .arg(dir)
            .env_remove("SCPO_OUT_DIR")
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let ra = std::fs::read(a.join("gradcheck_report.csv")).unwrap();
    let rb = std::fs::read(b.join("gradcheck_report.csv")).unwrap();
    assert_eq!(ra, rb);
    std::fs::remove_dir_all(&a).unwrap();
    std::fs::remove_dir_all(&b).unwrap();
}
