use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use super::{CopyTransformer, ModelConfig, ModelError, Vocabulary};

pub const CHECKPOINT_FORMAT: &str = "cqg-checkpoint/1";
const MANIFEST: &str = "checkpoint.json";
const PARAMS: &str = "params.safetensors";
const OPTIMIZER: &str = "optimizer.safetensors";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    schema_version: String,
    config: ModelConfig,
    vocab: Vocabulary,
    #[serde(default)]
    state: serde_json::Value,
}

pub struct LoadedCheckpoint {
    pub model: CopyTransformer,
    /// Caller-defined training state, `null` when absent.
    pub state: serde_json::Value,
    pub optimizer: Option<HashMap<String, Tensor>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write `dir/checkpoint.json`, `dir/params.safetensors` and, when given,
/// `dir/optimizer.safetensors`.
pub fn save_checkpoint(
    dir: &Path,
    model: &CopyTransformer,
    state: &serde_json::Value,
    optimizer: Option<&HashMap<String, Tensor>>,
) -> Result<(), ModelError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.into(),
        schema_version: crate::SCHEMA_VERSION.into(),
        config: model.config().clone(),
        vocab: model.vocab().clone(),
        state: state.clone(),
    };
    let path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    fs::write(&path, json).map_err(io_err(&path))?;
    candle_core::safetensors::save(&model.params().to_tensors()?, dir.join(PARAMS))?;
    let opt_path: PathBuf = dir.join(OPTIMIZER);
    match optimizer {
        Some(tensors) => candle_core::safetensors::save(tensors, &opt_path)?,
        None if opt_path.exists() => fs::remove_file(&opt_path).map_err(io_err(&opt_path))?,
        None => {}
    }
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<LoadedCheckpoint, ModelError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(ModelError::Checkpoint(format!(
            "unsupported checkpoint format {:?}, expected {CHECKPOINT_FORMAT:?}",
            manifest.format
        )));
    }
    let model = CopyTransformer::new(manifest.config, manifest.vocab)?;
    let params = candle_core::safetensors::load(dir.join(PARAMS), &Device::Cpu)?;
    model.params().load_tensors(&params)?;
    let opt_path = dir.join(OPTIMIZER);
    let optimizer = if opt_path.exists() {
        Some(candle_core::safetensors::load(&opt_path, &Device::Cpu)?)
    } else {
        None
    };
    Ok(LoadedCheckpoint {
        model,
        state: manifest.state,
        optimizer,
    })
}
