//! Checkpoint directory layout:
//!
//! ```text
//! <dir>/manifest.json     format tag, seed, dim, config and its SHA-256
//! <dir>/frame_id.params   MemoryParams text for frame identification
//! <dir>/arg_id.params     MemoryParams text for argument identification
//! ```
//!
//! A params file is line oriented: a header line, `dim <d>`, `seed <n|none>`,
//! then `w_in` followed by `d` rows of `d` space-separated numbers and the
//! same for `w_out`. Numbers use the shortest representation that parses
//! back to the identical `f64`, so save/load is lossless.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mkem::MemoryParams;

use super::{TrainConfig, TrainedModel};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAME_ID_FILE: &str = "frame_id.params";
pub const ARG_ID_FILE: &str = "arg_id.params";
const FORMAT: &str = "framespa-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub dim: usize,
    pub config_hash: String,
    pub config: TrainConfig,
    pub frame_id: String,
    pub arg_id: String,
}

pub fn config_hash(cfg: &TrainConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    model: &TrainedModel,
    cfg: &TrainConfig,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    model.frame_id.save(dir.join(FRAME_ID_FILE))?;
    model.arg_id.save(dir.join(ARG_ID_FILE))?;
    let manifest = Manifest {
        format: FORMAT.to_string(),
        seed: cfg.seed,
        dim: model.frame_id.dim(),
        config_hash: config_hash(cfg),
        config: cfg.clone(),
        frame_id: FRAME_ID_FILE.to_string(),
        arg_id: ARG_ID_FILE.to_string(),
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(TrainedModel, Manifest)> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::Checkpoint(format!(
            "no {MANIFEST_FILE} in {}",
            dir.display()
        )));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if manifest.format != FORMAT {
        return Err(Error::Checkpoint(format!(
            "unsupported format {:?}",
            manifest.format
        )));
    }
    if manifest.config_hash != config_hash(&manifest.config) {
        return Err(Error::Checkpoint(
            "config hash does not match config".into(),
        ));
    }
    let frame_id = MemoryParams::load(dir.join(&manifest.frame_id))?;
    let arg_id = MemoryParams::load(dir.join(&manifest.arg_id))?;
    if frame_id.dim() != manifest.dim || arg_id.dim() != manifest.dim {
        return Err(Error::Checkpoint(
            "parameter dimension disagrees with manifest".into(),
        ));
    }
    Ok((TrainedModel { frame_id, arg_id }, manifest))
}
