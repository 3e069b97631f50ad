//! Run manifests: the fully resolved invocation of a command plus digests
//! of every input file, enough to replay the run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cdistill::config::{DataConfig, RunConfig, SweepConfig};
use cdistill::distill::Variant;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Prepare {
        seed: u64,
        data: DataConfig,
    },
    TrainTeacher {
        config: RunConfig,
        dataset: PathBuf,
    },
    TrainStudent {
        config: RunConfig,
        dataset: PathBuf,
        variant: Variant,
        teacher: Option<PathBuf>,
    },
    Evaluate {
        config: RunConfig,
        dataset: PathBuf,
        checkpoint: PathBuf,
        dump_ranks: bool,
    },
    Bench {
        seed: u64,
        dataset: PathBuf,
        checkpoints: Vec<PathBuf>,
        repetitions: usize,
        warmup: usize,
        users: Option<usize>,
    },
    Sweep {
        grid: SweepConfig,
        dataset: PathBuf,
        teacher: Option<PathBuf>,
    },
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Prepare { .. } => "prepare",
            Invocation::TrainTeacher { .. } => "train-teacher",
            Invocation::TrainStudent { .. } => "train-student",
            Invocation::Evaluate { .. } => "evaluate",
            Invocation::Bench { .. } => "bench",
            Invocation::Sweep { .. } => "sweep",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Invocation::Prepare { seed, .. } | Invocation::Bench { seed, .. } => *seed,
            Invocation::TrainTeacher { config, .. }
            | Invocation::TrainStudent { config, .. }
            | Invocation::Evaluate { config, .. } => config.seed,
            Invocation::Sweep { grid, .. } => grid.base.seed,
        }
    }

    /// Files the command reads.
    pub fn inputs(&self) -> Vec<PathBuf> {
        let mut v = Vec::new();
        match self {
            Invocation::Prepare { data, .. } => {
                if data.synthetic.is_none() {
                    v.extend(data.input.clone());
                }
            }
            Invocation::TrainTeacher { dataset, .. } => v.push(dataset.clone()),
            Invocation::TrainStudent { dataset, teacher, .. } | Invocation::Sweep { dataset, teacher, .. } => {
                v.push(dataset.clone());
                v.extend(teacher.clone());
            }
            Invocation::Evaluate { dataset, checkpoint, .. } => {
                v.push(dataset.clone());
                v.push(checkpoint.clone());
            }
            Invocation::Bench { dataset, checkpoints, .. } => {
                v.push(dataset.clone());
                v.extend(checkpoints.iter().cloned());
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub invocation: Invocation,
    /// Content hash of the interactions the run used.
    pub dataset_fingerprint: Option<String>,
    /// sha256 of every input file, keyed by path.
    pub input_digests: BTreeMap<PathBuf, String>,
    pub out_dir: PathBuf,
    /// Files written, relative to `out_dir`.
    pub outputs: Vec<String>,
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn input_digests(inv: &Invocation) -> Result<BTreeMap<PathBuf, String>> {
    inv.inputs().into_iter().map(|p| Ok((p.clone(), file_digest(&p)?))).collect()
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("{} is not a run manifest", path.display()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
    }

    /// Errors if any input file changed since the manifest was written.
    pub fn verify_inputs(&self) -> Result<()> {
        for (path, want) in &self.input_digests {
            let got = file_digest(path)?;
            if &got != want {
                bail!("input {} changed since the run (sha256 {got}, manifest has {want})", path.display());
            }
        }
        Ok(())
    }
}
