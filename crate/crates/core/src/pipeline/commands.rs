use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Vector3};

use super::{read_json, read_text, to_json_line, write_atomic};
use crate::error::{Error, Result};
use crate::model::{quaternion_from_wxyz, PrimitiveObject};
use crate::rigidbody::{simulate_all, SimConfig};
use crate::shapefit::{fit_primitives, FitConfig};
use crate::trajextract::{extract_trajectory, read_keypoints_csv, CameraIntrinsics, ExtractOptions, Extraction};
use crate::voxel::{read_binvox, voxelize, write_binvox};

fn load_object(path: &Path) -> Result<PrimitiveObject> {
    PrimitiveObject::from_json(&read_text(path)?).map_err(|e| match e {
        Error::Json { source, .. } => Error::Json {
            context: path.display().to_string(),
            source,
        },
        other => other,
    })
}

/// Simulate all four interactions for an object file; writes
/// `i0.csv`..`i3.csv` into `out` and returns their paths.
pub fn cmd_simulate(object: &Path, sim: &SimConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let object = load_object(object)?;
    let trajectories = simulate_all(&object, sim)?;
    trajectories
        .iter()
        .map(|t| {
            let path = out.join(format!("i{}.csv", t.interaction_id()));
            write_atomic(&path, t.to_csv().as_bytes())?;
            Ok(path)
        })
        .collect()
}

pub fn cmd_voxelize(object: &Path, resolution: usize, out: &Path) -> Result<usize> {
    let grid = voxelize(&load_object(object)?, resolution)?;
    write_atomic(out, &write_binvox(&grid))?;
    Ok(grid.occupied_count())
}

/// Fit cuboids to a binvox file and return the object JSON.
pub fn cmd_fit(binvox: &Path, fit: &FitConfig) -> Result<String> {
    let bytes = std::fs::read(binvox).map_err(|e| Error::io(binvox, e))?;
    let object = fit_primitives(&read_binvox(&bytes)?, fit)?;
    Ok(object.to_json())
}

/// Model points file: a JSON array of `[x, y, z]` triples.
pub fn read_model_points(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let raw: Vec<[f64; 3]> = read_json(path)?;
    Ok(raw.into_iter().map(Vector3::from).collect())
}

#[derive(serde::Deserialize)]
struct Extrinsics {
    translation: [f64; 3],
    rotation: [f64; 4],
}

/// World-to-camera transform file: `{"translation": [x, y, z], "rotation": [w, x, y, z]}`.
pub fn read_extrinsics(path: &Path) -> Result<Isometry3<f64>> {
    let e: Extrinsics = read_json(path)?;
    let q = quaternion_from_wxyz(e.rotation)?;
    Ok(Isometry3::from_parts(Vector3::from(e.translation).into(), q))
}

/// Reconstruct a trajectory from keypoints. Writes the trajectory CSV to
/// `out` and the per-frame status next to it as `<out>.status.json`.
pub fn cmd_extract_traj(
    keypoints: &Path,
    model: &Path,
    intrinsics: &Path,
    extrinsics: Option<&Path>,
    options: &ExtractOptions,
    out: &Path,
) -> Result<Extraction> {
    let frames = read_keypoints_csv(&read_text(keypoints)?)?;
    let model = read_model_points(model)?;
    let k = CameraIntrinsics::from_json(&read_text(intrinsics)?)?;
    let mut options = options.clone();
    if let Some(path) = extrinsics {
        options.world_to_camera = read_extrinsics(path)?;
    }
    let extraction = extract_trajectory(&frames, &model, &k, &options)?;
    write_atomic(out, extraction.trajectory.to_csv().as_bytes())?;
    let mut status = out.as_os_str().to_owned();
    status.push(".status.json");
    write_atomic(Path::new(&status), to_json_line(&extraction.status).as_bytes())?;
    Ok(extraction)
}
