use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::infer::{Budget, DistanceMode, ShapeMode};
use crate::rigidbody::SimConfig;
use crate::shapefit::FitConfig;
use crate::towergen::{MAX_BLOCKS, MIN_BLOCKS};
use crate::voxel::DEFAULT_RESOLUTION;

/// Everything a pipeline run depends on. Read from TOML; command-line flags
/// override individual fields afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Fraction of towers assigned to the training split.
    pub split: f64,
    pub tower: TowerConfig,
    pub sim: SimConfig,
    pub fit: FitConfig,
    pub infer: InferConfig,
    pub paths: Paths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TowerConfig {
    pub count: usize,
    /// Block counts are drawn uniformly from `min_blocks..=max_blocks`.
    pub min_blocks: usize,
    pub max_blocks: usize,
    pub density_configs: usize,
    /// Snap block faces to the voxel grid so fitting can be exact.
    pub grid_aligned: bool,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    #[serde(with = "budget_one")]
    pub budget: Budget,
    pub mode: ShapeMode,
    pub distance: DistanceMode,
    pub keep: usize,
    /// Cap on the number of test records `infer` processes.
    pub max_tasks: Option<usize>,
    /// JSON prior file; uniform when absent.
    pub prior: Option<PathBuf>,
    #[serde(with = "budget_list")]
    pub sweep_budgets: Vec<Budget>,
    pub sweep_tasks: usize,
    pub sweep_distance: DistanceMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: PathBuf,
    pub results: PathBuf,
    pub report: PathBuf,
    pub sweep: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            split: 0.8,
            tower: TowerConfig::default(),
            sim: SimConfig::default(),
            fit: FitConfig::default(),
            infer: InferConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl Default for TowerConfig {
    fn default() -> Self {
        TowerConfig {
            count: 10,
            min_blocks: MIN_BLOCKS,
            max_blocks: MAX_BLOCKS,
            density_configs: 8,
            grid_aligned: true,
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            budget: Budget::Samples(512),
            mode: ShapeMode::Phys,
            distance: DistanceMode::Mse,
            keep: 10,
            max_tasks: None,
            prior: None,
            sweep_budgets: [1, 8, 64, 512].map(Budget::Samples).to_vec(),
            sweep_tasks: 50,
            sweep_distance: DistanceMode::Mae,
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            dataset: "data".into(),
            results: "results/infer.json".into(),
            report: "results/eval.json".into(),
            sweep: "results/sweep.json".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad(format!("split {} must lie in (0, 1)", self.split));
        }
        let t = &self.tower;
        if t.count == 0 || t.density_configs == 0 {
            return bad("tower.count and tower.density_configs must be at least 1".into());
        }
        if t.min_blocks > t.max_blocks || t.min_blocks < MIN_BLOCKS || t.max_blocks > MAX_BLOCKS {
            return bad(format!(
                "block range {}..={} must lie within {MIN_BLOCKS}..={MAX_BLOCKS}",
                t.min_blocks, t.max_blocks
            ));
        }
        if t.resolution < 8 || !t.resolution.is_power_of_two() || t.resolution > 1024 {
            return bad(format!("resolution {} must be a power of two in 8..=1024", t.resolution));
        }
        if self.infer.keep == 0 {
            return bad("infer.keep must be at least 1".into());
        }
        if self.infer.sweep_budgets.is_empty() || self.infer.sweep_tasks == 0 {
            return bad("sweep needs at least one budget and one task".into());
        }
        if self.infer.sweep_budgets.iter().any(|b| matches!(b, Budget::Exhaustive { .. })) {
            return bad("sweep budgets must be sample counts".into());
        }
        if self.infer.mode == ShapeMode::ShapePhys && matches!(self.infer.budget, Budget::Exhaustive { .. }) {
            return bad("exhaustive search is only available in phys mode".into());
        }
        self.sim.validate()?;
        self.fit.validate()?;
        let p = &self.paths;
        let distinct: BTreeSet<&Path> = [&p.dataset, &p.results, &p.report, &p.sweep].into_iter().map(|p| p.as_path()).collect();
        if distinct.len() != 4 {
            return bad("paths.dataset, results, report and sweep must be distinct".into());
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawBudget {
    Count(usize),
    Text(String),
}

impl TryFrom<RawBudget> for Budget {
    type Error = Error;

    fn try_from(raw: RawBudget) -> Result<Self> {
        match raw {
            RawBudget::Count(n) => format!("{n}").parse(),
            RawBudget::Text(s) => s.parse(),
        }
    }
}

// Budgets are written as `512` or `"exhaustive:10"` in TOML.
mod budget_one {
    use super::*;

    pub fn serialize<S: Serializer>(b: &Budget, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&b.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Budget, D::Error> {
        Budget::try_from(RawBudget::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

mod budget_list {
    use super::*;

    pub fn serialize<S: Serializer>(b: &[Budget], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(b.iter().map(|b| b.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Budget>, D::Error> {
        Vec::<RawBudget>::deserialize(d)?
            .into_iter()
            .map(|r| Budget::try_from(r).map_err(serde::de::Error::custom))
            .collect()
    }
}
