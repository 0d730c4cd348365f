//! `scpo` — train constrained policies, evaluate checkpoints, and run the
//! verification suites.
//!
//! Exit codes are a stable contract: 0 success, 1 verification failure,
//! 2 usage or configuration error, 3 numeric abort during training.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use scpo_core::envs::make_env;
use scpo_core::error::Error;
use scpo_core::nn::Checkpoint;
use scpo_core::oracle::{KPower, MASTER_SEED};
use scpo_core::report::{check_csv, metrics_csv, write_atomic, CheckRecord};
use scpo_core::suites::{run_suite, SUITE_NAMES};
use scpo_core::trainer::{
    evaluate_policy, policy_from_checkpoint, IterationMetrics, Mode, TrainConfig, Trainer,
};

#[derive(Parser)]
#[command(name = "scpo", version, about = "Safe policy optimization laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training loop and write metrics, checkpoints and a manifest.
    Train(TrainArgs),
    /// Run a verification suite and write its CSV report.
    Verify(VerifyArgs),
    /// Roll out a checkpointed policy and report return, cost and safety.
    Eval(EvalArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration file (TOML mirroring the config fields).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Environment name; required when no config file is given.
    #[arg(long)]
    env: Option<String>,
    /// Output root (overridden by SCPO_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// scpo, lagrangian or unconstrained.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    beta: Option<f64>,
    /// Safety-critic exponent; a nonnegative integer or "inf".
    #[arg(long)]
    k: Option<KPower>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    timesteps: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// One of: oracle, theorems, lyapunov, toys, gradcheck.
    #[arg(long)]
    suite: String,
    /// Master seed for the randomized batches.
    #[arg(long, default_value_t = MASTER_SEED)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    env: String,
    #[arg(long)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_CHECK_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERIC_ABORT: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match code {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                Error::NumericAbort(_) => EXIT_NUMERIC_ABORT,
                _ => EXIT_USAGE,
            })
        }
    }
}

fn output_root(cli_out: Option<PathBuf>) -> PathBuf {
    if let Ok(dir) = std::env::var("SCPO_OUT_DIR") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    cli_out.unwrap_or_else(|| PathBuf::from("runs"))
}

/// Stable FNV-1a content hash of the serialized config, recorded in the
/// manifest so a run directory identifies what produced it.
fn config_hash(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

#[derive(Serialize)]
struct RunManifest<'a> {
    run_id: &'a str,
    master_seed: u64,
    artifact_hash: String,
    out_dir: String,
    config: &'a TrainConfig,
}

fn load_config(args: &TrainArgs) -> Result<TrainConfig, Error> {
    let mut cfg = match (&args.config, &args.env) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{e}")))?
        }
        (None, Some(env)) => TrainConfig::table_defaults(env)?,
        (None, None) => {
            return Err(Error::InvalidConfig(
                "pass --config or --env to select a task".into(),
            ))
        }
    };
    if let (Some(env), Some(_)) = (&args.env, &args.config) {
        cfg.env = env.clone();
    }
    if let Some(run_id) = &args.run_id {
        cfg.run_id = run_id.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    if let Some(beta) = args.beta {
        cfg.beta = beta;
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(iterations) = args.iterations {
        cfg.iterations = iterations;
    }
    if let Some(timesteps) = args.timesteps {
        cfg.timesteps = timesteps;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode, Error> {
    let root = output_root(args.out.clone());
    let cfg = load_config(&args)?;
    let run_dir = root.join(&cfg.run_id);
    if run_dir.exists() {
        return Err(Error::InvalidConfig(format!(
            "run directory {} already exists; pick a fresh run id",
            run_dir.display()
        )));
    }
    std::fs::create_dir_all(&run_dir)?;

    let cfg_toml =
        toml::to_string_pretty(&cfg).map_err(|e| Error::InvalidConfig(format!("{e}")))?;
    let manifest = RunManifest {
        run_id: &cfg.run_id,
        master_seed: cfg.seed,
        artifact_hash: config_hash(cfg_toml.as_bytes()),
        out_dir: run_dir.display().to_string(),
        config: &cfg,
    };
    write_atomic(
        &run_dir.join("manifest.toml"),
        &toml::to_string_pretty(&manifest).map_err(|e| Error::InvalidConfig(format!("{e}")))?,
    )?;

    let mut trainer = Trainer::from_config(cfg.clone())?;
    let mut rows: Vec<IterationMetrics> = Vec::with_capacity(cfg.iterations);
    for i in 0..cfg.iterations {
        match trainer.train_iteration() {
            Ok(m) => {
                println!(
                    "iter {:>4}  steps {:>8}  return {:>10.3}  cost {:>8.3}  entropy {:>7.3}",
                    m.iteration, m.env_steps, m.mean_return, m.mean_cost, m.entropy
                );
                rows.push(m);
                write_atomic(&run_dir.join("metrics.csv"), &metrics_csv(&rows))?;
                if cfg.checkpoint_every > 0 && (i + 1) % cfg.checkpoint_every == 0 {
                    trainer
                        .checkpoint()
                        .save(&run_dir.join(format!("checkpoint_{:05}.ckpt", i + 1)))?;
                }
            }
            Err(err @ Error::NumericAbort(_)) => {
                trainer.checkpoint().save(&run_dir.join("abort.ckpt"))?;
                eprintln!("error: {err}");
                return Ok(ExitCode::from(EXIT_NUMERIC_ABORT));
            }
            Err(other) => return Err(other),
        }
    }
    trainer.checkpoint().save(&run_dir.join("final.ckpt"))?;
    println!("run `{}` finished: {}", cfg.run_id, run_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, Error> {
    if !SUITE_NAMES.contains(&args.suite.as_str()) {
        return Err(Error::InvalidConfig(format!(
            "unknown suite `{}` (expected one of {SUITE_NAMES:?})",
            args.suite
        )));
    }
    let records = run_suite(&args.suite, args.seed)?;
    let root = output_root(args.out.clone());
    std::fs::create_dir_all(&root)?;
    let report = root.join(format!("{}_report.csv", args.suite));
    write_atomic(&report, &check_csv(&records))?;

    print_grouped(&records);
    let failures = records.iter().filter(|r| !r.pass).count();
    println!(
        "suite `{}`: {}/{} checks passed ({})",
        args.suite,
        records.len() - failures,
        records.len(),
        report.display()
    );
    if failures == 0 {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(EXIT_CHECK_FAILURE))
    }
}

/// One summary line per check name: instance count and worst value.
fn print_grouped(records: &[CheckRecord]) {
    let mut groups: BTreeMap<&str, (usize, usize, f64)> = BTreeMap::new();
    for r in records {
        let entry = groups.entry(r.check.as_str()).or_insert((0, 0, 0.0));
        entry.0 += 1;
        entry.1 += usize::from(r.pass);
        entry.2 = entry.2.max(r.value.abs());
    }
    for (name, (total, passed, worst)) in groups {
        let status = if passed == total { "PASS" } else { "FAIL" };
        println!("{status} {name}: {passed}/{total} (worst |value| {worst:.3e})");
    }
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode, Error> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let mut env = make_env(&args.env, &Default::default())?;
    let policy = policy_from_checkpoint(&ck, env.as_ref())?;
    let report = evaluate_policy(env.as_mut(), &policy, args.episodes, args.seed)?;
    println!(
        "episodes {}  mean_return {}  mean_cost {}  cost_std {}  safe_fraction {}",
        report.episodes,
        report.mean_return,
        report.mean_cost,
        report.cost_std,
        report.safe_fraction
    );
    let root = output_root(args.out.clone());
    std::fs::create_dir_all(&root)?;
    let csv = format!(
        "episodes,mean_return,mean_cost,cost_std,safe_fraction\n{},{},{},{},{}\n",
        report.episodes,
        report.mean_return,
        report.mean_cost,
        report.cost_std,
        report.safe_fraction
    );
    write_atomic(
        &root.join(format!("eval-{}-{}.csv", args.env, args.seed)),
        &csv,
    )?;
    Ok(ExitCode::SUCCESS)
}
