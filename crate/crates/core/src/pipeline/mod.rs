//! File-based experiment pipeline behind the `physprim` binary.
//!
//! A dataset directory holds `manifest.json`, a JSON-lines `index.jsonl`
//! with one record per (tower, density configuration), one binvox file per
//! tower under `voxels/` and four trajectory CSVs per record under `traj/`.
//! Every file is written to a temporary name and renamed into place.

mod commands;
mod config;
mod dataset;
mod experiment;

use std::path::Path;

pub use commands::{cmd_extract_traj, cmd_fit, cmd_simulate, cmd_voxelize, read_extrinsics, read_model_points};
pub use config::{ExperimentConfig, InferConfig, Paths, TowerConfig};
pub use dataset::{
    cmd_gen, parse_index, train_towers, Dataset, DatasetRecord, Manifest, Split, INDEX_FILE, MANIFEST_FILE,
    MAX_REDRAWS,
};
pub use experiment::{
    cmd_eval, cmd_infer, cmd_sweep, sweep_tasks, EvalReport, InferenceResults, MethodMetrics, SweepReport, SweepRow,
    SweepTask, TaskResult,
};

use crate::error::{Error, Result};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Write via a sibling temporary file and rename, creating parent
/// directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })
}

pub(crate) fn to_json_line<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}
