use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{read_text, write_atomic, TOOL, VERSION};
use crate::error::{Error, Result};
use crate::model::{DensitySlot, Material, PrimitiveObject, Trajectory};
use crate::rigidbody::{simulate_all, SimConfig};
use crate::rng::{derive_seed, seeded, STREAM_DENSITY, STREAM_SPLIT};
use crate::towergen::{assign_densities, draw_materials, sample_tower, TowerSpec};
use crate::voxel::{read_binvox, voxelize, write_binvox, VoxelGrid};

pub const INDEX_FILE: &str = "index.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
/// Density redraws allowed when a configuration's rollout diverges.
pub const MAX_REDRAWS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One line of the dataset index: a tower with one density configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub tower: usize,
    pub config: usize,
    /// Seed the tower geometry and its densities were drawn from.
    pub seed: u64,
    pub split: Split,
    pub num_blocks: usize,
    pub slots: Vec<DensitySlot>,
    pub materials: Vec<Material>,
    pub object: PrimitiveObject,
    /// Paths relative to the dataset directory.
    pub voxels: String,
    pub trajectories: Vec<String>,
    /// Times the density draw was repeated because the rollout diverged.
    pub redraws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub towers: usize,
    pub records: usize,
    pub trajectory_files: usize,
    pub config: ExperimentConfig,
}

/// A dataset on disk: manifest plus parsed index.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: Manifest = serde_json::from_str(&read_text(&manifest_path)?).map_err(|source| Error::Json {
            context: manifest_path.display().to_string(),
            source,
        })?;
        let records = parse_index(&read_text(&dir.join(INDEX_FILE))?)?;
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest,
            records,
        })
    }

    pub fn sim_config(&self) -> &SimConfig {
        &self.manifest.config.sim
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = (usize, &DatasetRecord)> {
        self.records.iter().enumerate().filter(move |(_, r)| r.split == split)
    }

    pub fn trajectories(&self, record: &DatasetRecord) -> Result<Vec<Trajectory>> {
        record
            .trajectories
            .iter()
            .enumerate()
            .map(|(i, rel)| {
                let path = self.dir.join(rel);
                Trajectory::from_csv(&read_text(&path)?, self.sim_config().dt, i).map_err(|e| with_path(e, &path))
            })
            .collect()
    }

    pub fn voxels(&self, record: &DatasetRecord) -> Result<VoxelGrid> {
        let path = self.dir.join(&record.voxels);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        read_binvox(&bytes).map_err(|e| with_path(e, &path))
    }
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { offset, reason } => Error::Parse {
            offset,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    }
}

/// Parse a JSON-lines index; errors carry the 1-based line number.
pub fn parse_index(text: &str) -> Result<Vec<DatasetRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Parse {
                offset: i + 1,
                reason: format!("{INDEX_FILE}: {e}"),
            })
        })
        .collect()
}

struct TowerOutput {
    tower: usize,
    seed: u64,
    voxels: Vec<u8>,
    configs: Vec<(PrimitiveObject, Vec<Trajectory>, usize)>,
}

/// Simulate one density configuration, redrawing densities while the rollout
/// diverges.
pub(crate) fn simulate_config(
    object: PrimitiveObject,
    seed: u64,
    config: usize,
    sim: &SimConfig,
) -> Result<(PrimitiveObject, Vec<Trajectory>, usize)> {
    let mut object = object;
    for redraw in 0..=MAX_REDRAWS {
        match simulate_all(&object, sim) {
            Ok(t) => return Ok((object, t, redraw)),
            Err(Error::Simulation { .. }) if redraw < MAX_REDRAWS => {
                let mut rng = seeded(derive_seed(seed, ((config as u64) << 8) | redraw as u64), STREAM_DENSITY);
                let (materials, slots) = draw_materials(object.len(), &mut rng);
                object = object.with_slots(&slots)?.with_material_labels(Some(materials))?;
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("the last redraw returns")
}

/// Tower geometry for one seed under the config's block range and grid.
pub(crate) fn tower_geometry(cfg: &ExperimentConfig, seed: u64) -> Result<PrimitiveObject> {
    let t = &cfg.tower;
    let span = (t.max_blocks - t.min_blocks + 1) as u64;
    let num_blocks = t.min_blocks + (derive_seed(seed, u64::MAX) % span) as usize;
    let mut spec = TowerSpec::new(num_blocks, seed);
    spec.num_density_configs = t.density_configs;
    if t.grid_aligned {
        spec = spec.grid_aligned(t.resolution as u32);
    }
    sample_tower(&spec)
}

fn generate_tower(cfg: &ExperimentConfig, tower: usize) -> Result<TowerOutput> {
    let t = &cfg.tower;
    let seed = derive_seed(cfg.seed, tower as u64);
    let geometry = tower_geometry(cfg, seed)?;
    let voxels = write_binvox(&voxelize(&geometry, t.resolution)?);
    let configs = assign_densities(&geometry, t.density_configs, seed)?
        .into_iter()
        .enumerate()
        .map(|(c, object)| simulate_config(object, seed, c, &cfg.sim))
        .collect::<Result<Vec<_>>>()?;
    Ok(TowerOutput {
        tower,
        seed,
        voxels,
        configs,
    })
}

/// Towers whose records go to the training split.
pub fn train_towers(count: usize, split: f64, seed: u64) -> Vec<bool> {
    let train = if count < 2 {
        count
    } else {
        ((count as f64 * split).round() as usize).clamp(1, count - 1)
    };
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut seeded(seed, STREAM_SPLIT));
    let mut is_train = vec![false; count];
    for &i in &order[..train] {
        is_train[i] = true;
    }
    is_train
}

/// Generate the dataset described by `cfg` into `out`. Output bytes depend
/// only on the config, not on thread count.
pub fn cmd_gen(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out.join("voxels")).map_err(|e| Error::io(out, e))?;
    std::fs::create_dir_all(out.join("traj")).map_err(|e| Error::io(out, e))?;
    let towers = (0..cfg.tower.count)
        .into_par_iter()
        .map(|i| {
            let r = generate_tower(cfg, i);
            log::debug!("tower {i} done");
            r
        })
        .collect::<Result<Vec<_>>>()?;
    let is_train = train_towers(cfg.tower.count, cfg.split, cfg.seed);

    let mut index = String::new();
    let mut trajectory_files = 0;
    for t in &towers {
        let voxels = format!("voxels/t{:04}.binvox", t.tower);
        write_atomic(&out.join(&voxels), &t.voxels)?;
        for (c, (object, trajectories, redraws)) in t.configs.iter().enumerate() {
            let id = format!("t{:04}_c{:02}", t.tower, c);
            let mut files = Vec::with_capacity(trajectories.len());
            for (i, traj) in trajectories.iter().enumerate() {
                let rel = format!("traj/{id}_i{i}.csv");
                write_atomic(&out.join(&rel), traj.to_csv().as_bytes())?;
                files.push(rel);
                trajectory_files += 1;
            }
            let record = DatasetRecord {
                id,
                tower: t.tower,
                config: c,
                seed: t.seed,
                split: if is_train[t.tower] { Split::Train } else { Split::Test },
                num_blocks: object.len(),
                slots: object.slots().expect("configs carry densities"),
                materials: object.materials().expect("configs carry materials").to_vec(),
                object: object.clone(),
                voxels: voxels.clone(),
                trajectories: files,
                redraws: *redraws,
            };
            index.push_str(&serde_json::to_string(&record).expect("records always serialize"));
            index.push('\n');
        }
    }
    let manifest = Manifest {
        tool: TOOL.into(),
        version: VERSION.into(),
        seed: cfg.seed,
        towers: towers.len(),
        records: towers.iter().map(|t| t.configs.len()).sum(),
        trajectory_files,
        config: cfg.clone(),
    };
    write_atomic(&out.join(INDEX_FILE), index.as_bytes())?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifests always serialize");
    write_atomic(&out.join(MANIFEST_FILE), format!("{json}\n").as_bytes())?;
    log::info!("wrote {} records to {}", manifest.records, out.display());
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        let t = train_towers(10, 0.8, 1);
        assert_eq!(t.iter().filter(|&&b| b).count(), 8);
        assert_eq!(train_towers(2, 0.99, 1).iter().filter(|&&b| b).count(), 1);
        assert_eq!(train_towers(1, 0.5, 1), vec![true]);
    }

    #[test]
    fn index_errors_name_the_line() {
        let err = parse_index("\n{\"id\": 1}\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 2, .. }), "{err}");
    }
}
