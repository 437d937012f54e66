//! A miniature end-to-end run: dataset, estimator, policy, and evaluations.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::Result;
use serde::Serialize;
use tendonsim_core::datagen::calibrate_ideal_gain;
use tendonsim_core::fsutil::{write_atomic, StagedDir};
use tendonsim_core::store::save_dataset;
use tendonsim_estimators::{Arch, TrainConfig};
use tendonsim_eval::{eval_sim2real_gap, EvalSetup, NamedModel};
use tendonsim_rl::PolicySource;

use crate::commands::{estimator_report, generate, policy_training, stairs, train_model};
use crate::files::{DatagenFile, PolicyFile, TrainFile};
use crate::manifest::{hash_path, relative_files, RunManifest};

/// Deterministic record of a smoke run; contains no timing.
#[derive(Debug, Serialize)]
struct SmokeManifest {
    seed: u64,
    tool_version: &'static str,
    dataset_hash: String,
    ideal_gain: f64,
    /// Relative file name to SHA-256.
    files: BTreeMap<String, String>,
}

pub fn smoke(seed: u64, out: &Path) -> Result<RunManifest> {
    let staged = StagedDir::new(out)?;
    let dir = staged.path();

    let mut data_file = DatagenFile::default();
    data_file.datagen.total_minutes = 2.0;
    data_file.datagen.episode_seconds = 20.0;
    let ds = generate(&data_file, seed)?;
    save_dataset(&ds, &dir.join("data"))?;
    eprintln!("smoke: {} episodes", ds.episodes.len());

    let train_file = TrainFile {
        train: TrainConfig {
            epochs: 3,
            batch_size: 64,
            windows_per_epoch: Some(2000),
            seed,
            ..TrainConfig::default()
        },
        model: None,
    };
    let model = train_model(&ds, &train_file, Arch::Transformer, false)?.model;
    model.save(&dir.join("transformer.bin"))?;
    let max_force = data_file.servo.max_force;
    write_atomic(&dir.join("estimator_report.csv"), &estimator_report(&model, &ds, max_force)?)?;
    eprintln!("smoke: estimator val rmse {:.3} N", model.meta.best_val_rmse);

    let mut policy_file = PolicyFile::default();
    policy_file.ppo.num_envs = 4;
    policy_file.ppo.horizon = 64;
    policy_file.ppo.total_updates = 20;
    policy_file.ppo.eval_every = 10;
    let model = Arc::new(model);
    let policy = policy_training(PolicySource::Learned(model.clone()), &policy_file, seed, None)?.best;
    policy.save(&dir.join("policy.bin"))?;

    let setup = EvalSetup {
        seed,
        ideal_gain: calibrate_ideal_gain(&ds, max_force)?,
        ..EvalSetup::default()
    };
    let gap = eval_sim2real_gap(
        NamedModel {
            name: "learned",
            model: &model,
        },
        &setup,
    )?;
    gap.write(&dir.join("gap"))?;
    stairs(&policy, 3.0, seed, &dir.join("stairs.csv"))?;

    let mut files = BTreeMap::new();
    for rel in relative_files(dir)? {
        files.insert(rel.clone(), hash_path(&dir.join(&rel))?);
    }
    let smoke_manifest = SmokeManifest {
        seed,
        tool_version: env!("CARGO_PKG_VERSION"),
        dataset_hash: ds.content_hash(),
        ideal_gain: setup.ideal_gain,
        files,
    };
    let mut bytes = serde_json::to_vec_pretty(&smoke_manifest)?;
    bytes.push(b'\n');
    write_atomic(&dir.join("manifest.json"), &bytes)?;
    staged.publish()?;

    let mut manifest = RunManifest::new("smoke", seed);
    manifest.output(out)?;
    Ok(manifest)
}
