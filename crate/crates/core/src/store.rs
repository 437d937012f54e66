//! On-disk dataset layout: one CSV per episode plus `manifest.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{sha256_hex, Dataset, Episode, SampleRecord, Split};
use crate::error::{CoreError, Result};
use crate::fsutil::{write_atomic, StagedDir};
use crate::trajectory::TrajectoryFamily;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const EPISODE_HEADER: [&str; 9] = [
    "t", "theta_d", "theta", "theta_dot", "F_load", "q1", "q2", "tip_x", "tip_y",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub file: String,
    pub system_id: String,
    pub seed: u64,
    pub family: TrajectoryFamily,
    pub blocked: bool,
    pub split: Split,
    pub records: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub config_hash: String,
    pub content_hash: String,
    pub episodes: Vec<EpisodeEntry>,
}

/// Serializes records with shortest round-trip float formatting, so reading the
/// file back reproduces every value bit for bit.
pub fn episode_csv(records: &[SampleRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| CoreError::Csv {
        path: "<memory>".into(),
        source: e,
    };
    w.write_record(EPISODE_HEADER).map_err(wrap)?;
    for r in records {
        let row = [
            r.t, r.theta_d, r.theta, r.theta_dot, r.force, r.q[0], r.q[1], r.tip[0], r.tip[1],
        ];
        w.write_record(row.iter().map(|v| v.to_string())).map_err(wrap)?;
    }
    w.into_inner()
        .map_err(|e| CoreError::Dataset(format!("csv flush failed: {e}")))
}

pub fn parse_episode_csv(bytes: &[u8], path: &Path) -> Result<Vec<SampleRecord>> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let headers = rdr.headers().map_err(|e| CoreError::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names != EPISODE_HEADER {
        return Err(CoreError::Parse {
            path: path.to_path_buf(),
            reason: format!("unexpected header {names:?}"),
        });
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| CoreError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut v = [0.0f64; 9];
        for (slot, field) in v.iter_mut().zip(row.iter()) {
            *slot = field.trim().parse().map_err(|e| CoreError::Parse {
                path: path.to_path_buf(),
                reason: format!("row {}: {e}", line + 2),
            })?;
        }
        if row.len() != 9 {
            return Err(CoreError::Parse {
                path: path.to_path_buf(),
                reason: format!("row {} has {} fields", line + 2, row.len()),
            });
        }
        out.push(SampleRecord {
            t: v[0],
            theta_d: v[1],
            theta: v[2],
            theta_dot: v[3],
            force: v[4],
            q: [v[5], v[6]],
            tip: [v[7], v[8]],
        });
    }
    Ok(out)
}

pub fn write_episode_csv(path: &Path, records: &[SampleRecord]) -> Result<()> {
    write_atomic(path, &episode_csv(records)?)
}

pub fn read_episode_csv(path: &Path) -> Result<Vec<SampleRecord>> {
    let bytes = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    parse_episode_csv(&bytes, path)
}

fn episode_file_name(ep: &Episode) -> String {
    format!("{}_{:016x}.csv", ep.system_id, ep.seed)
}

/// Writes the dataset into a staging directory and moves it into place only
/// once every file is complete.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<DatasetManifest> {
    let stage = StagedDir::new(dir)?;
    let mut entries = Vec::with_capacity(ds.episodes.len());
    for ep in &ds.episodes {
        let file = episode_file_name(ep);
        let bytes = episode_csv(&ep.records)?;
        let path = stage.path().join(&file);
        fs::write(&path, &bytes).map_err(|e| CoreError::io(&path, e))?;
        entries.push(EpisodeEntry {
            file,
            system_id: ep.system_id.clone(),
            seed: ep.seed,
            family: ep.family,
            blocked: ep.blocked,
            split: ep.split,
            records: ep.records.len(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        config_hash: ds.config_hash.clone(),
        content_hash: ds.content_hash(),
        episodes: entries,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    let path = stage.path().join(MANIFEST_FILE);
    fs::write(&path, json).map_err(|e| CoreError::io(&path, e))?;
    stage.publish()?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| CoreError::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_slice(&bytes).map_err(|e| CoreError::Parse {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(CoreError::Parse {
            path,
            reason: format!("unsupported format version {}", manifest.format_version),
        });
    }
    Ok(manifest)
}

/// Loads a dataset directory, checking every episode file against its recorded digest.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let mut episodes = Vec::with_capacity(manifest.episodes.len());
    for entry in &manifest.episodes {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| CoreError::io(&path, e))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(CoreError::Dataset(format!("{} does not match its manifest digest", entry.file)));
        }
        let records = parse_episode_csv(&bytes, &path)?;
        if records.len() != entry.records {
            return Err(CoreError::Dataset(format!(
                "{} holds {} records, manifest says {}",
                entry.file,
                records.len(),
                entry.records
            )));
        }
        episodes.push(Episode {
            system_id: entry.system_id.clone(),
            seed: entry.seed,
            family: entry.family,
            blocked: entry.blocked,
            split: entry.split,
            records,
        });
    }
    let ds = Dataset {
        episodes,
        config_hash: manifest.config_hash,
    };
    if ds.content_hash() != manifest.content_hash {
        return Err(CoreError::Dataset("content hash mismatch".into()));
    }
    Ok(ds)
}
