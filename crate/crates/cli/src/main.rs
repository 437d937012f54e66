mod args;
mod commands;
mod failure;
mod files;
mod manifest;
mod smoke;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};
use commands::EvalInputs;
use failure::{classify, report_line};
use manifest::{sibling_path, RunManifest};

fn configure_threads(global: &args::Global) -> Result<()> {
    let threads = if global.deterministic { Some(1) } else { global.threads };
    if let Some(n) = threads {
        if n == 0 {
            return Err(failure::UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads(&cli.global)?;
    let seed = cli.global.seed;
    let started = Instant::now();
    let (manifest, out): (RunManifest, &Path) = match &cli.command {
        Command::Datagen { out, config, minutes } => (commands::datagen(seed, out, config.as_deref(), *minutes)?, out),
        Command::TrainEstimator {
            arch,
            data,
            out,
            config,
            epochs,
            windows_per_epoch,
        } => (
            commands::train_estimator(seed, (*arch).into(), data, out, config.as_deref(), *epochs, *windows_per_epoch)?,
            out,
        ),
        Command::EvalEstimator { model, data, report } => (commands::eval_estimator(seed, model, data, report)?, report),
        Command::Rollout {
            source,
            model,
            gain,
            system,
            traj,
            out,
        } => (commands::rollout(seed, *source, model.as_deref(), *gain, system, traj, out)?, out),
        Command::TrainPolicy {
            source,
            model,
            gain,
            config,
            out,
            updates,
        } => (
            commands::train_policy_cmd(seed, *source, model.as_deref(), gain, config.as_deref(), out, *updates)?,
            out,
        ),
        Command::EvalPolicy {
            snapshot,
            schedule: _,
            dwell,
            out,
        } => (commands::eval_policy(seed, snapshot, *dwell, out)?, out),
        Command::Eval {
            experiment,
            out,
            config,
            gain,
            model,
            mlp,
            rnn,
            transformer,
            learned_policy,
            ideal_policy,
        } => {
            let inputs = EvalInputs {
                gain,
                model: model.as_deref(),
                mlp: mlp.as_deref(),
                rnn: rnn.as_deref(),
                transformer: transformer.as_deref(),
                learned_policy: learned_policy.as_deref(),
                ideal_policy: ideal_policy.as_deref(),
            };
            (commands::eval(seed, *experiment, out, config.as_deref(), &inputs)?, out)
        }
        Command::ValidateConfig { kind, file } => {
            let hash = commands::validate_config(*kind, file)?;
            println!("ok config_hash={hash}");
            return Ok(());
        }
        Command::Smoke { out } => (smoke::smoke(seed, out)?, out),
    };
    let mut manifest = manifest;
    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    manifest.write(&sibling_path(out))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = classify(&err);
            eprintln!("{}", report_line(kind, &format!("{command}: {err:#}")));
            ExitCode::from(kind.code() as u8)
        }
    }
}
