use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::dataset::{simulate_config, tower_geometry, Dataset, Split};
use super::{read_json, read_text, TOOL, VERSION};
use crate::error::{Error, Result};
use crate::infer::{
    infer_exhaustive, infer_with_shape, Budget, DistanceMode, InferenceTask, Ranking, SearchOptions, ShapeMode,
    ShapeSearch,
};
use crate::metrics::{
    baseline_frequent, baseline_nearest, density_rmse, oracle_guess, per_primitive_rankings, random_guess,
    topk_accuracy, TrainItem,
};
use crate::model::{DensityPrior, DensitySlot, PrimitiveObject, Trajectory};
use crate::rng::{derive_seed, seeded, STREAM_BASELINE};
use crate::shapefit::fit_primitives;
use crate::towergen::assign_densities;
use crate::voxel::{voxelize, VoxelGrid};

const SWEEP_SALT: u64 = 0x5357_4545_5000_0000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub id: String,
    pub seed: u64,
    pub truth: Vec<DensitySlot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<PrimitiveObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<Ranking>,
    /// Why the task produced no ranking (shape fitting failed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResults {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub dataset_seed: u64,
    pub budget: String,
    pub mode: ShapeMode,
    pub distance: DistanceMode,
    pub tasks: Vec<TaskResult>,
}

impl InferenceResults {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn to_json(&self) -> String {
        super::to_json_line(self)
    }
}

fn load_prior(cfg: &ExperimentConfig) -> Result<Option<DensityPrior>> {
    cfg.infer
        .prior
        .as_deref()
        .map(|p| DensityPrior::from_json(&read_text(p)?))
        .transpose()
}

/// Infer densities for the test split of a dataset (all records when the
/// split is empty). Each record gets its own seed derived from the config
/// seed and its index line.
pub fn cmd_infer(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<InferenceResults> {
    cfg.validate()?;
    let prior = load_prior(cfg)?;
    let mut records: Vec<_> = dataset.split(Split::Test).collect();
    if records.is_empty() {
        records = dataset.records.iter().enumerate().collect();
    }
    if let Some(max) = cfg.infer.max_tasks {
        records.truncate(max);
    }
    let options = SearchOptions {
        keep: cfg.infer.keep,
        ..SearchOptions::default()
    };
    let sim = dataset.sim_config().clone();
    let tasks = records
        .par_iter()
        .map(|&(index, record)| {
            let seed = derive_seed(cfg.seed, index as u64);
            let grid = dataset.voxels(record)?;
            let observations = dataset.trajectories(record)?;
            let outcome = match cfg.infer.budget {
                Budget::Exhaustive { stride } => fit_primitives(&grid, &cfg.fit).and_then(|shape| {
                    let mut task = InferenceTask::new(shape.clone(), observations, cfg.infer.budget)?
                        .with_mode(cfg.infer.distance)
                        .with_sim(sim.clone());
                    if let Some(p) = &prior {
                        task = task.with_prior(p.clone())?;
                    }
                    Ok((shape, infer_exhaustive(&task, stride, &options)?))
                }),
                Budget::Samples(budget) => {
                    let search = ShapeSearch {
                        budget,
                        mode: cfg.infer.mode,
                        distance: cfg.infer.distance,
                        fit: cfg.fit.clone(),
                        sim: sim.clone(),
                        prior: prior.clone(),
                    };
                    infer_with_shape(&grid, &observations, &search, seed, &options)
                }
            };
            let (shape, ranking, error) = match outcome {
                Ok((shape, ranking)) => (Some(shape), Some(ranking), None),
                Err(e @ Error::Fit(_)) => (None, None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            log::debug!("inferred {}", record.id);
            Ok(TaskResult {
                id: record.id.clone(),
                seed,
                truth: record.slots.clone(),
                shape,
                ranking,
                error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InferenceResults {
        tool: TOOL.into(),
        version: VERSION.into(),
        seed: cfg.seed,
        dataset_seed: dataset.manifest.seed,
        budget: cfg.infer.budget.to_string(),
        mode: cfg.infer.mode,
        distance: cfg.infer.distance,
        tasks,
    })
}

/// Scores of one prediction method, pooled over primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: String,
    pub primitives: usize,
    pub top1: f64,
    /// Only defined for methods that produce a ranking.
    pub top5: Option<f64>,
    pub top10: Option<f64>,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub tasks: usize,
    /// Tasks without a ranking or whose fitted shape has a different
    /// primitive count than the truth.
    pub skipped: usize,
    pub methods: Vec<MethodMetrics>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        super::to_json_line(self)
    }

    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut out = String::new();
        writeln!(out, "tasks {}  skipped {}  seed {}", self.tasks, self.skipped, self.seed).unwrap();
        writeln!(out, "{:<10} {:>10} {:>8} {:>8} {:>8} {:>9}", "method", "primitives", "top1", "top5", "top10", "rmse").unwrap();
        for m in &self.methods {
            writeln!(
                out,
                "{:<10} {:>10} {:>8} {:>8} {:>8} {:>9.4}",
                m.method,
                m.primitives,
                fmt(Some(m.top1)),
                fmt(m.top5),
                fmt(m.top10),
                m.rmse
            )
            .unwrap();
        }
        out
    }
}

fn single_guess_metrics(method: &str, pred: &[DensitySlot], truth: &[DensitySlot]) -> Result<MethodMetrics> {
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(MethodMetrics {
        method: method.into(),
        primitives: truth.len(),
        top1: hits as f64 / truth.len() as f64,
        top5: None,
        top10: None,
        rmse: density_rmse(pred, truth)?,
    })
}

/// Score inference results against the dataset, alongside the frequent,
/// oracle, nearest-neighbour and random baselines on the same primitives.
pub fn cmd_eval(cfg: &ExperimentConfig, results: &InferenceResults, dataset: &Dataset) -> Result<EvalReport> {
    let by_id: std::collections::HashMap<&str, _> =
        dataset.records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut evaluated = Vec::new();
    for task in &results.tasks {
        let record = *by_id
            .get(task.id.as_str())
            .ok_or_else(|| Error::domain(format!("result {} has no dataset record", task.id)))?;
        match &task.ranking {
            Some(r) if r.best().is_some_and(|b| b.slots.len() == record.slots.len()) => evaluated.push((record, r)),
            _ => {}
        }
    }
    let skipped = results.tasks.len() - evaluated.len();
    if evaluated.is_empty() {
        return Err(Error::domain("no evaluable inference results"));
    }

    let truth: Vec<DensitySlot> = evaluated.iter().flat_map(|(r, _)| r.slots.iter().copied()).collect();
    let rankings: Vec<Vec<DensitySlot>> = evaluated.iter().flat_map(|(_, r)| per_primitive_rankings(r)).collect();
    let best: Vec<DensitySlot> = evaluated
        .iter()
        .flat_map(|(_, r)| r.best().expect("checked above").slots.iter().copied())
        .collect();
    let mut methods = vec![MethodMetrics {
        method: "inference".into(),
        primitives: truth.len(),
        top1: topk_accuracy(&rankings, &truth, 1)?,
        top5: Some(topk_accuracy(&rankings, &truth, 5)?),
        top10: Some(topk_accuracy(&rankings, &truth, 10)?),
        rmse: density_rmse(&best, &truth)?,
    }];

    let train: Vec<_> = dataset.split(Split::Train).map(|(_, r)| r).collect();
    if !train.is_empty() {
        let mode = baseline_frequent(train.iter().flat_map(|r| r.slots.iter().copied()))?;
        methods.push(single_guess_metrics("frequent", &vec![mode; truth.len()], &truth)?);
    }

    let mut rng = seeded(cfg.seed, STREAM_BASELINE);
    let oracle: Vec<DensitySlot> = evaluated
        .iter()
        .flat_map(|(r, _)| r.materials.clone())
        .map(|m| oracle_guess(m, &mut rng))
        .collect();
    methods.push(single_guess_metrics("oracle", &oracle, &truth)?);

    if !train.is_empty() {
        let items = train
            .par_iter()
            .map(|r| {
                Ok(TrainItem {
                    slots: r.slots.clone(),
                    trajectories: dataset.trajectories(r)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut pred = Vec::new();
        let mut nn_truth = Vec::new();
        for (record, _) in &evaluated {
            let same: Vec<TrainItem> = items.iter().filter(|i| i.slots.len() == record.slots.len()).cloned().collect();
            if same.is_empty() {
                continue;
            }
            let observations: Vec<Trajectory> = dataset.trajectories(record)?;
            pred.extend(baseline_nearest(&same, &observations, results.distance)?.slots);
            nn_truth.extend(record.slots.iter().copied());
        }
        if !pred.is_empty() {
            methods.push(single_guess_metrics("nearest", &pred, &nn_truth)?);
        }
    }

    let mut rng = seeded(derive_seed(cfg.seed, 1), STREAM_BASELINE);
    let random: Vec<DensitySlot> = truth.iter().map(|_| random_guess(&mut rng)).collect();
    methods.push(single_guess_metrics("random", &random, &truth)?);

    Ok(EvalReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        seed: cfg.seed,
        tasks: results.tasks.len(),
        skipped,
        methods,
    })
}

/// One synthetic task of the budget sweep.
#[derive(Debug, Clone)]
pub struct SweepTask {
    pub seed: u64,
    pub object: PrimitiveObject,
    pub grid: VoxelGrid,
    pub observations: Vec<Trajectory>,
}

/// The sweep's tasks: fresh towers with one density draw each, simulated
/// without noise.
pub fn sweep_tasks(cfg: &ExperimentConfig) -> Result<Vec<SweepTask>> {
    let base = derive_seed(cfg.seed ^ SWEEP_SALT, 0);
    (0..cfg.infer.sweep_tasks)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(base, i as u64);
            let geometry = tower_geometry(cfg, seed)?;
            let grid = voxelize(&geometry, cfg.tower.resolution)?;
            let first = assign_densities(&geometry, 1, seed)?.remove(0);
            let (object, observations, _) = simulate_config(first, seed, 0, &cfg.sim)?;
            Ok(SweepTask {
                seed,
                object,
                grid,
                observations,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mode: ShapeMode,
    /// Mean over tasks of the best candidate's distance, per budget.
    #[serde(with = "crate::infer::non_finite_vec")]
    pub mean: Vec<f64>,
    /// `per_task[t][b]`: best distance of task `t` at budget `b`.
    pub per_task: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub tasks: usize,
    pub distance: DistanceMode,
    pub budgets: Vec<usize>,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        super::to_json_line(self)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write!(out, "{:<12}", "mode").unwrap();
        for b in &self.budgets {
            write!(out, " {:>12}", format!("{b}x")).unwrap();
        }
        out.push('\n');
        for row in &self.rows {
            write!(out, "{:<12}", row.mode.to_string()).unwrap();
            for v in &row.mean {
                write!(out, " {v:>12.6}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Best trajectory distance as a function of sample budget, with and
/// without shape sampling. Budgets reuse the same seed, so the draws of a
/// smaller budget are a prefix of those of a larger one.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let budgets: Vec<usize> = cfg
        .infer
        .sweep_budgets
        .iter()
        .map(|b| match b {
            Budget::Samples(n) => *n,
            Budget::Exhaustive { .. } => unreachable!("validated"),
        })
        .collect();
    let tasks = sweep_tasks(cfg)?;
    let options = SearchOptions {
        keep: 1,
        ..SearchOptions::default()
    };
    let mut rows = Vec::new();
    for mode in [ShapeMode::Phys, ShapeMode::ShapePhys] {
        let per_task = tasks
            .par_iter()
            .map(|task| {
                budgets
                    .iter()
                    .map(|&budget| {
                        let search = ShapeSearch {
                            budget,
                            mode,
                            distance: cfg.infer.sweep_distance,
                            fit: cfg.fit.clone(),
                            sim: cfg.sim.clone(),
                            prior: None,
                        };
                        let (_, ranking) =
                            infer_with_shape(&task.grid, &task.observations, &search, derive_seed(task.seed, 1), &options)?;
                        Ok(ranking.best().map_or(f64::INFINITY, |c| c.score))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mean = (0..budgets.len())
            .map(|b| per_task.iter().map(|t| t[b]).sum::<f64>() / tasks.len() as f64)
            .collect();
        let per_task = per_task
            .into_iter()
            .map(|t| t.into_iter().map(|v| v.is_finite().then_some(v)).collect())
            .collect();
        rows.push(SweepRow { mode, mean, per_task });
        log::info!("sweep row {mode} done");
    }
    Ok(SweepReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        seed: cfg.seed,
        tasks: tasks.len(),
        distance: cfg.infer.sweep_distance,
        budgets,
        rows,
    })
}
