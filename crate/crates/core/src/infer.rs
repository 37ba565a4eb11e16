//! Density inference by sampling, simulating and selecting.
//!
//! Every candidate slot vector is rolled out under the observed interactions
//! and scored by its trajectory distance to the observations. Scores are
//! accumulated frame by frame in a fixed order, so a candidate can be dropped
//! as soon as its partial sum exceeds the worst score still kept; the kept
//! set is exactly the one an unpruned search would return. Candidates are
//! evaluated in fixed-size chunks against a threshold snapshot taken before
//! each chunk, which keeps every output independent of the thread count.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DensityPrior, DensitySlot, Pose, Primitive, PrimitiveObject, Trajectory, NUM_INTERACTIONS, NUM_SLOTS};
use crate::rigidbody::{mass_properties, simulate_all, Interaction, SimConfig, Simulator};
use crate::rng::{seeded, STREAM_PRIOR, STREAM_SHAPE_JITTER};
use crate::shapefit::{fit_primitives, FitConfig};
use crate::voxel::VoxelGrid;

/// Largest search space `infer_exhaustive` will enumerate.
pub const MAX_EXHAUSTIVE: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    /// Mean squared error, the selection objective.
    #[default]
    Mse,
    /// Mean absolute error, used for reporting.
    Mae,
}

impl FromStr for DistanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(DistanceMode::Mse),
            "mae" => Ok(DistanceMode::Mae),
            other => Err(Error::domain(format!("unknown distance mode {other:?}"))),
        }
    }
}

impl fmt::Display for DistanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMode::Mse => "mse",
            DistanceMode::Mae => "mae",
        })
    }
}

/// Summed per-component error of one frame. The simulated quaternion is
/// flipped into the observed one's hemisphere first.
pub fn frame_error(sim: &Pose, obs: &Pose, mode: DistanceMode) -> f64 {
    let s = sim.components();
    let o = obs.components();
    let dot: f64 = (3..7).map(|i| s[i] * o[i]).sum();
    let sign = if dot < 0.0 { -1.0 } else { 1.0 };
    let mut acc = 0.0;
    for i in 0..7 {
        let v = if i >= 3 { sign * s[i] } else { s[i] };
        let d = v - o[i];
        acc += match mode {
            DistanceMode::Mse => d * d,
            DistanceMode::Mae => d.abs(),
        };
    }
    acc
}

/// Mean over frames and the seven pose components.
pub fn trajectory_distance(sim: &Trajectory, obs: &Trajectory, mode: DistanceMode) -> Result<f64> {
    if sim.len() != obs.len() {
        return Err(Error::domain(format!(
            "trajectory lengths differ: {} vs {}",
            sim.len(),
            obs.len()
        )));
    }
    let total: f64 = sim
        .poses()
        .iter()
        .zip(obs.poses())
        .map(|(s, o)| frame_error(s, o, mode))
        .sum();
    Ok(total / (obs.len() * 7) as f64)
}

/// How many candidates an inference run may evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    Samples(usize),
    Exhaustive { stride: usize },
}

impl FromStr for Budget {
    type Err = Error;

    /// `"512"`, `"exhaustive"` or `"exhaustive:10"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("exhaustive") {
            let stride = match rest.strip_prefix(':') {
                Some(v) => v.parse().map_err(|_| Error::Config(format!("bad stride in budget {s:?}")))?,
                None if rest.is_empty() => 1,
                None => return Err(Error::Config(format!("bad budget {s:?}"))),
            };
            if stride == 0 {
                return Err(Error::Config("stride must be at least 1".into()));
            }
            return Ok(Budget::Exhaustive { stride });
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Budget::Samples(n)),
            _ => Err(Error::Config(format!("budget {s:?} must be a positive integer or \"exhaustive\""))),
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Samples(n) => write!(f, "{n}"),
            Budget::Exhaustive { stride: 1 } => f.write_str("exhaustive"),
            Budget::Exhaustive { stride } => write!(f, "exhaustive:{stride}"),
        }
    }
}

/// Known geometry plus observed trajectories for one object.
#[derive(Debug, Clone)]
pub struct InferenceTask {
    pub shape: PrimitiveObject,
    pub observations: Vec<Trajectory>,
    pub prior: DensityPrior,
    pub budget: Budget,
    pub mode: DistanceMode,
    pub sim: SimConfig,
}

impl InferenceTask {
    /// Uniform prior, MSE objective, default simulation settings.
    pub fn new(shape: PrimitiveObject, observations: Vec<Trajectory>, budget: Budget) -> Result<Self> {
        let prior = DensityPrior::uniform(shape.len());
        let task = InferenceTask {
            shape: shape.geometry(),
            observations,
            prior,
            budget,
            mode: DistanceMode::default(),
            sim: SimConfig::default(),
        };
        task.validate()?;
        Ok(task)
    }

    pub fn with_prior(mut self, prior: DensityPrior) -> Result<Self> {
        self.prior = prior;
        self.validate()?;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: DistanceMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_sim(mut self, sim: SimConfig) -> Self {
        self.sim = sim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let obs = &self.observations;
        if obs.is_empty() || obs.len() > NUM_INTERACTIONS {
            return Err(Error::domain(format!("{} observations, expected 1..={NUM_INTERACTIONS}", obs.len())));
        }
        let mut seen = [false; NUM_INTERACTIONS];
        for t in obs {
            let id = t.interaction_id();
            if id >= NUM_INTERACTIONS || seen[id] {
                return Err(Error::domain(format!("interaction id {id} is invalid or repeated")));
            }
            seen[id] = true;
            if t.len() != obs[0].len() {
                return Err(Error::domain("observations have different lengths"));
            }
        }
        if self.prior.num_primitives() != self.shape.len() {
            return Err(Error::domain(format!(
                "prior covers {} primitives, shape has {}",
                self.prior.num_primitives(),
                self.shape.len()
            )));
        }
        match self.budget {
            Budget::Samples(0) | Budget::Exhaustive { stride: 0 } => Err(Error::domain("budget must be at least 1")),
            _ => Ok(()),
        }
    }
}

/// A scored density assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub slots: Vec<DensitySlot>,
    /// Mean distance over interactions, frames and components; infinite when
    /// the rollout diverged (serialized as `null`).
    #[serde(with = "non_finite")]
    pub score: f64,
    /// Per-interaction distances, in observation order.
    #[serde(with = "non_finite_vec")]
    pub distances: Vec<f64>,
    /// Index of the draw that produced this candidate.
    pub sample: usize,
    /// Geometry used, when it differs from the task shape.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<PrimitiveObject>,
    #[serde(skip)]
    pub trajectories: Option<Vec<Trajectory>>,
    #[serde(skip)]
    raw: f64,
}

impl Candidate {
    /// Ranking order: score, then the slot vector, then the draw index.
    pub fn rank_cmp(&self, other: &Candidate) -> std::cmp::Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| self.slots.cmp(&other.slots))
            .then_with(|| self.sample.cmp(&other.sample))
    }

    pub fn slot_values(&self) -> Vec<u32> {
        self.slots.iter().map(|s| s.get()).collect()
    }
}

mod non_finite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

pub(crate) mod non_finite_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.is_finite().then_some(*x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v = Vec::<Option<f64>>::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

/// Candidates in ascending rank order plus search statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub mode: DistanceMode,
    pub candidates: Vec<Candidate>,
    /// Distinct candidates simulated (fully or partially).
    pub evaluated: usize,
    /// Candidates abandoned early because they could not make the kept set.
    pub pruned: usize,
    pub diverged: usize,
}

impl Ranking {
    pub fn best(&self) -> Option<&Candidate> {
        self.candidates.first()
    }

    /// All kept candidates whose score equals the best score.
    pub fn tied_best(&self) -> &[Candidate] {
        let Some(best) = self.best() else { return &[] };
        let n = self.candidates.iter().take_while(|c| c.score == best.score).count();
        &self.candidates[..n]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rankings always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchOptions {
    /// Number of best candidates kept in the ranking.
    pub keep: usize,
    /// Re-simulate kept candidates and attach their trajectories.
    pub retain_trajectories: bool,
    /// Candidates evaluated between threshold updates.
    pub chunk: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            keep: 10,
            retain_trajectories: false,
            chunk: 64,
        }
    }
}

enum Outcome {
    Complete { total: f64, per: Vec<f64> },
    Pruned,
    Diverged,
}

struct Job {
    slots: Vec<DensitySlot>,
    object: Option<PrimitiveObject>,
    sample: usize,
}

struct Search<'a> {
    task: &'a InferenceTask,
    interactions: Vec<Interaction>,
    sim: SimConfig,
    options: SearchOptions,
    kept: Vec<Candidate>,
    evaluated: usize,
    pruned: usize,
    diverged: usize,
}

impl<'a> Search<'a> {
    fn new(task: &'a InferenceTask, options: SearchOptions) -> Result<Self> {
        task.validate()?;
        if options.keep == 0 || options.chunk == 0 {
            return Err(Error::Config("keep and chunk must be positive".into()));
        }
        let interactions = task
            .observations
            .iter()
            .map(|t| Interaction::canonical(t.interaction_id()))
            .collect::<Result<_>>()?;
        let sim = SimConfig {
            steps: task.observations[0].len(),
            ..task.sim.clone()
        };
        Ok(Search {
            task,
            interactions,
            sim,
            options,
            kept: Vec::with_capacity(options.keep + 1),
            evaluated: 0,
            pruned: 0,
            diverged: 0,
        })
    }

    fn norm(&self) -> f64 {
        (self.task.observations.len() * self.task.observations[0].len() * 7) as f64
    }

    fn limit(&self) -> f64 {
        if self.kept.len() < self.options.keep {
            f64::INFINITY
        } else {
            self.kept.last().map_or(f64::INFINITY, |c| c.raw)
        }
    }

    fn evaluate(&self, object: &PrimitiveObject, limit: f64) -> Result<Outcome> {
        let mass = mass_properties(object)?;
        let mut total = 0.0;
        let mut per = Vec::with_capacity(self.interactions.len());
        for (inter, obs) in self.interactions.iter().zip(&self.task.observations) {
            let mut sim = Simulator::with_mass(object, mass, &self.sim)?;
            sim.apply_impulse(&inter.impulse(object, &mass, &self.sim));
            let mut partial = 0.0;
            for frame in obs.poses() {
                let pose = match sim.step() {
                    Ok(p) => p,
                    Err(Error::Simulation { step, reason }) => {
                        log::debug!("candidate diverged at step {step}: {reason}");
                        return Ok(Outcome::Diverged);
                    }
                    Err(e) => return Err(e),
                };
                partial += frame_error(&pose, frame, self.task.mode);
                if total + partial > limit {
                    return Ok(Outcome::Pruned);
                }
            }
            total += partial;
            per.push(partial);
        }
        Ok(Outcome::Complete { total, per })
    }

    fn run(&mut self, jobs: impl IntoIterator<Item = Job>) -> Result<()> {
        let mut jobs = jobs.into_iter().peekable();
        while jobs.peek().is_some() {
            let chunk: Vec<Job> = jobs.by_ref().take(self.options.chunk).collect();
            let limit = self.limit();
            let outcomes: Vec<Result<Outcome>> = chunk
                .par_iter()
                .map(|job| match &job.object {
                    Some(obj) => self.evaluate(obj, limit),
                    None => self.evaluate(&self.task.shape.with_slots(&job.slots)?, limit),
                })
                .collect();
            for (job, outcome) in chunk.into_iter().zip(outcomes) {
                self.evaluated += 1;
                let (raw, per) = match outcome? {
                    Outcome::Pruned => {
                        self.pruned += 1;
                        continue;
                    }
                    Outcome::Diverged => {
                        self.diverged += 1;
                        (f64::INFINITY, vec![f64::INFINITY; self.interactions.len()])
                    }
                    Outcome::Complete { total, per } => (total, per),
                };
                let frames = (self.task.observations[0].len() * 7) as f64;
                self.insert(Candidate {
                    slots: job.slots,
                    score: raw / self.norm(),
                    distances: per.iter().map(|s| s / frames).collect(),
                    sample: job.sample,
                    shape: job.object.map(|o| o.geometry()),
                    trajectories: None,
                    raw,
                });
            }
        }
        Ok(())
    }

    fn insert(&mut self, c: Candidate) {
        let pos = self.kept.partition_point(|k| k.rank_cmp(&c).is_lt());
        if pos >= self.options.keep {
            return;
        }
        self.kept.insert(pos, c);
        self.kept.truncate(self.options.keep);
    }

    fn finish(mut self) -> Result<Ranking> {
        if self.options.retain_trajectories {
            for c in self.kept.iter_mut() {
                let obj = match &c.shape {
                    Some(shape) => shape.with_slots(&c.slots)?,
                    None => self.task.shape.with_slots(&c.slots)?,
                };
                c.trajectories = simulate_all(&obj, &self.sim).ok().map(|all| {
                    let ids: Vec<usize> = self.interactions.iter().map(|i| i.id).collect();
                    all.into_iter().filter(|t| ids.contains(&t.interaction_id())).collect()
                });
            }
        }
        Ok(Ranking {
            mode: self.task.mode,
            candidates: self.kept,
            evaluated: self.evaluated,
            pruned: self.pruned,
            diverged: self.diverged,
        })
    }
}

/// Slot vectors drawn i.i.d. from the prior. The first `n` draws for a seed
/// do not depend on the budget, so larger budgets search supersets.
pub fn draw_candidates(prior: &DensityPrior, budget: usize, seed: u64) -> Vec<Vec<DensitySlot>> {
    let mut rng = seeded(seed, STREAM_PRIOR);
    (0..budget).map(|_| prior.sample(&mut rng)).collect()
}

/// Sample `budget` candidates from the prior and rank them. Repeated draws
/// are evaluated once.
pub fn infer_sampled(task: &InferenceTask, seed: u64, options: &SearchOptions) -> Result<Ranking> {
    let Budget::Samples(budget) = task.budget else {
        return Err(Error::domain("infer_sampled needs a finite sample budget"));
    };
    let mut search = Search::new(task, *options)?;
    let mut seen = HashSet::new();
    let jobs: Vec<Job> = draw_candidates(&task.prior, budget, seed)
        .into_iter()
        .enumerate()
        .filter(|(_, s)| seen.insert(s.clone()))
        .map(|(sample, slots)| Job {
            slots,
            object: None,
            sample,
        })
        .collect();
    search.run(jobs)?;
    search.finish()
}

fn grid_values(stride: usize) -> Vec<u32> {
    (1..=NUM_SLOTS as u32).step_by(stride).collect()
}

/// Lexicographic enumeration of the product of per-primitive value lists.
fn product(axes: &[Vec<u32>]) -> impl Iterator<Item = Vec<DensitySlot>> + '_ {
    let mut idx = vec![0usize; axes.len()];
    let mut done = axes.iter().any(|a| a.is_empty());
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let out = idx
            .iter()
            .zip(axes)
            .map(|(&i, a)| DensitySlot::new(a[i]).expect("grid values are valid slots"))
            .collect();
        done = true;
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                done = false;
                break;
            }
            idx[k] = 0;
        }
        Some(out)
    })
}

fn space_size(axes: &[Vec<u32>]) -> f64 {
    axes.iter().map(|a| a.len() as f64).product()
}

/// Seed sub-lattice roughly this size is scored before the rest.
const SEED_LATTICE: usize = 256;

/// Evaluate a full lexicographic lattice (`n` values per axis, jobs numbered
/// in order) starting from a sparse seed sub-lattice and then outward from the
/// best seed. Pruning is exact and ties break on the sample number, so only
/// the pruned count depends on the order; a tight threshold early on is what
/// makes stride-1 search affordable.
fn run_nearest_first(search: &mut Search<'_>, jobs: Vec<Job>, n: usize) -> Result<()> {
    let k = search.task.shape.len();
    if jobs.len() <= 4 * search.options.chunk {
        return search.run(jobs);
    }
    let step = (1..=n).find(|s| n.div_ceil(*s).pow(k as u32) <= SEED_LATTICE).unwrap_or(n);
    let index = |sample: usize| -> Vec<usize> {
        let mut rest = sample;
        let mut out = vec![0; k];
        for d in (0..k).rev() {
            out[d] = rest % n;
            rest /= n;
        }
        out
    };
    let (seed, rest): (Vec<Job>, Vec<Job>) = jobs.into_iter().partition(|j| index(j.sample).iter().all(|i| i % step == 0));
    search.run(seed)?;
    let Some(best) = search.kept.first().map(|c| index(c.sample)) else {
        return search.run(rest);
    };
    let mut rest: Vec<(usize, Job)> = rest
        .into_iter()
        .map(|j| (index(j.sample).iter().zip(&best).map(|(a, b)| a.abs_diff(*b)).sum(), j))
        .collect();
    rest.sort_by_key(|(d, j)| (*d, j.sample));
    search.run(rest.into_iter().map(|(_, j)| j))
}

/// Grid search over slots `1, 1 + stride, ...` for every primitive, then a
/// `±stride` refinement around the best coarse candidate. The refinement
/// falls back to one coordinate at a time when the box would exceed
/// [`MAX_EXHAUSTIVE`] candidates. The prior is ignored.
pub fn infer_exhaustive(task: &InferenceTask, stride: usize, options: &SearchOptions) -> Result<Ranking> {
    if stride == 0 {
        return Err(Error::domain("stride must be at least 1"));
    }
    let k = task.shape.len();
    let coarse = vec![grid_values(stride); k];
    if space_size(&coarse) > MAX_EXHAUSTIVE as f64 {
        return Err(Error::domain(format!(
            "{} candidates for {k} primitives at stride {stride} exceed {MAX_EXHAUSTIVE}; use a larger stride",
            space_size(&coarse)
        )));
    }
    let mut search = Search::new(task, *options)?;
    let mut sample = 0usize;
    let mut numbered = |slots: Vec<DensitySlot>| {
        sample += 1;
        Job {
            slots,
            object: None,
            sample: sample - 1,
        }
    };
    let jobs: Vec<Job> = product(&coarse).map(&mut numbered).collect();
    run_nearest_first(&mut search, jobs, coarse[0].len())?;
    if stride == 1 {
        return search.finish();
    }

    let on_grid = |s: &[DensitySlot]| s.iter().all(|v| (v.get() - 1) as usize % stride == 0);
    let window = |center: u32| -> Vec<u32> {
        let lo = center.saturating_sub(stride as u32).max(1);
        let hi = (center + stride as u32).min(NUM_SLOTS as u32);
        (lo..=hi).collect()
    };
    let Some(best) = search.kept.first().map(|c| c.slot_values()) else {
        return search.finish();
    };
    let axes: Vec<Vec<u32>> = best.iter().map(|&c| window(c)).collect();
    if space_size(&axes) <= MAX_EXHAUSTIVE as f64 {
        let jobs: Vec<Job> = product(&axes).filter(|s| !on_grid(s)).map(&mut numbered).collect();
        search.run(jobs)?;
    } else {
        let mut seen: HashSet<Vec<DensitySlot>> = HashSet::new();
        for axis in 0..k {
            let current = search.kept[0].slot_values();
            let jobs: Vec<Job> = window(current[axis])
                .into_iter()
                .map(|v| {
                    let mut s = current.clone();
                    s[axis] = v;
                    s.into_iter().map(|x| DensitySlot::new(x).expect("window values are valid")).collect::<Vec<_>>()
                })
                .filter(|s| !on_grid(s) && seen.insert(s.clone()))
                .map(&mut numbered)
                .collect();
            search.run(jobs)?;
        }
    }
    search.finish()
}

/// Run whichever search the task budget asks for.
pub fn infer(task: &InferenceTask, seed: u64, options: &SearchOptions) -> Result<Ranking> {
    match task.budget {
        Budget::Samples(_) => infer_sampled(task, seed, options),
        Budget::Exhaustive { stride } => infer_exhaustive(task, stride, options),
    }
}

/// Whether shape samples are drawn alongside densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ShapeMode {
    /// Use the fitted shape as is.
    #[default]
    #[serde(rename = "phys")]
    Phys,
    /// Jitter every face of the fitted shape by one cell per sample.
    #[serde(rename = "shape+phys")]
    ShapePhys,
}

impl FromStr for ShapeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phys" => Ok(ShapeMode::Phys),
            "shape+phys" => Ok(ShapeMode::ShapePhys),
            other => Err(Error::Config(format!("unknown mode {other:?}, expected phys or shape+phys"))),
        }
    }
}

impl fmt::Display for ShapeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShapeMode::Phys => "phys",
            ShapeMode::ShapePhys => "shape+phys",
        })
    }
}

/// Settings for [`infer_with_shape`].
#[derive(Debug, Clone)]
pub struct ShapeSearch {
    pub budget: usize,
    pub mode: ShapeMode,
    pub distance: DistanceMode,
    pub fit: FitConfig,
    pub sim: SimConfig,
    pub prior: Option<DensityPrior>,
}

impl ShapeSearch {
    pub fn new(budget: usize, mode: ShapeMode) -> Self {
        ShapeSearch {
            budget,
            mode,
            distance: DistanceMode::default(),
            fit: FitConfig::default(),
            sim: SimConfig::default(),
            prior: None,
        }
    }
}

/// Move every face of every primitive one cell in or out at random, then put the object back on the ground inside the unit cube.
/// Densities already attached are kept.
pub fn jitter_shape<R: Rng + ?Sized>(shape: &PrimitiveObject, cell: f64, rng: &mut R) -> Result<PrimitiveObject> {
    let mut boxes: Vec<(Vector3<f64>, Vector3<f64>)> = shape
        .primitives()
        .iter()
        .map(|p| {
            let (mut lo, mut hi) = p.bounds();
            for axis in 0..3 {
                let dl = if rng.random_bool(0.5) { cell } else { -cell };
                let dh = if rng.random_bool(0.5) { cell } else { -cell };
                if (hi[axis] + dh) - (lo[axis] + dl) >= cell {
                    lo[axis] += dl;
                    hi[axis] += dh;
                }
            }
            (lo, hi)
        })
        .collect();
    let clamp = |boxes: &mut Vec<(Vector3<f64>, Vector3<f64>)>| {
        for (lo, hi) in boxes.iter_mut() {
            *lo = lo.map(|v| v.max(-0.5));
            *hi = hi.map(|v| v.min(0.5));
        }
    };
    clamp(&mut boxes);
    let floor = boxes.iter().map(|(lo, _)| lo.z).fold(f64::INFINITY, f64::min);
    for (lo, hi) in boxes.iter_mut() {
        lo.z += -0.5 - floor;
        hi.z += -0.5 - floor;
    }
    clamp(&mut boxes);
    let prims = boxes
        .iter()
        .zip(shape.primitives())
        .map(|((lo, hi), p)| {
            Primitive::cuboid((hi - lo).into(), ((lo + hi) / 2.0).into()).map(|q| q.with_density(p.density()))
        })
        .collect::<Result<Vec<_>>>()?;
    PrimitiveObject::new(prims)
}

/// Fit a shape to the grid and infer densities for it. In `shape+phys`
/// mode every density draw comes with its own jittered shape; the density
/// draws are the same ones `phys` mode uses for the seed.
pub fn infer_with_shape(
    grid: &VoxelGrid,
    observations: &[Trajectory],
    search: &ShapeSearch,
    seed: u64,
    options: &SearchOptions,
) -> Result<(PrimitiveObject, Ranking)> {
    let shape = fit_primitives(grid, &search.fit)?;
    let mut task = InferenceTask::new(shape.clone(), observations.to_vec(), Budget::Samples(search.budget))?
        .with_mode(search.distance)
        .with_sim(search.sim.clone());
    if let Some(prior) = &search.prior {
        task = task.with_prior(prior.clone())?;
    }
    let ranking = match search.mode {
        ShapeMode::Phys => infer_sampled(&task, seed, options)?,
        ShapeMode::ShapePhys => {
            let mut rng = seeded(seed, STREAM_SHAPE_JITTER);
            let cell = grid.cell_size();
            let jobs = draw_candidates(&task.prior, search.budget, seed)
                .into_iter()
                .enumerate()
                .map(|(sample, slots)| {
                    let object = jitter_shape(&shape.with_slots(&slots)?, cell, &mut rng)?;
                    Ok(Job {
                        slots: object.slots().expect("jitter keeps densities"),
                        object: Some(object),
                        sample,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut s = Search::new(&task, *options)?;
            s.run(jobs)?;
            s.finish()?
        }
    };
    Ok((shape, ranking))
}
