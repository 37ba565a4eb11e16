//! Density baselines and evaluation metrics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::{trajectory_distance, DistanceMode, Ranking};
use crate::model::{DensityPrior, DensitySlot, Material, PrimitiveObject, Trajectory, NUM_SLOTS};
use crate::rng::{seeded, STREAM_BASELINE};

/// Probabilities below this are clamped inside the physics loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// Most common slot across all training primitives; ties go to the smaller slot.
pub fn baseline_frequent(train: impl IntoIterator<Item = DensitySlot>) -> Result<DensitySlot> {
    let mut counts = [0usize; NUM_SLOTS];
    let mut any = false;
    for s in train {
        counts[s.index()] += 1;
        any = true;
    }
    if !any {
        return Err(Error::domain("frequent-density baseline needs a non-empty training set"));
    }
    let (index, _) = counts
        .iter()
        .enumerate()
        .fold((0, 0), |best, (i, &c)| if c > best.1 { (i, c) } else { best });
    DensitySlot::from_index(index)
}

/// A training object with its observed trajectories.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub slots: Vec<DensitySlot>,
    pub trajectories: Vec<Trajectory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NearestMatch {
    pub index: usize,
    pub slots: Vec<DensitySlot>,
    /// Summed distance over interactions.
    pub distance: f64,
}

/// Training item whose trajectories are closest to `observations`, summed
/// over interactions. Ties go to the earlier item.
pub fn baseline_nearest(train: &[TrainItem], observations: &[Trajectory], mode: DistanceMode) -> Result<NearestMatch> {
    let mut best: Option<NearestMatch> = None;
    for (index, item) in train.iter().enumerate() {
        if item.trajectories.len() != observations.len() {
            return Err(Error::domain(format!(
                "training item {index} has {} trajectories, query has {}",
                item.trajectories.len(),
                observations.len()
            )));
        }
        let mut distance = 0.0;
        for (t, o) in item.trajectories.iter().zip(observations) {
            if t.interaction_id() != o.interaction_id() {
                return Err(Error::domain(format!(
                    "training item {index} interaction {} does not match query interaction {}",
                    t.interaction_id(),
                    o.interaction_id()
                )));
            }
            distance += trajectory_distance(t, o, mode)?;
        }
        if best.as_ref().is_none_or(|b| distance < b.distance) {
            best = Some(NearestMatch {
                index,
                slots: item.slots.clone(),
                distance,
            });
        }
    }
    best.ok_or_else(|| Error::domain("nearest-neighbor baseline needs a non-empty training set"))
}

/// Uniform guess within the material's slot range.
pub fn oracle_guess<R: Rng + ?Sized>(material: Material, rng: &mut R) -> DensitySlot {
    let slots = material.slots();
    slots[rng.random_range(0..slots.len())]
}

pub fn baseline_oracle(material: Material, seed: u64) -> DensitySlot {
    oracle_guess(material, &mut seeded(seed, STREAM_BASELINE))
}

/// Uniform guess over all slots.
pub fn random_guess<R: Rng + ?Sized>(rng: &mut R) -> DensitySlot {
    DensitySlot::from_index(rng.random_range(0..NUM_SLOTS)).expect("index in range")
}

/// Fraction of primitives whose true slot is among the first `k` entries of
/// that primitive's ranking.
pub fn topk_accuracy(rankings: &[Vec<DensitySlot>], truth: &[DensitySlot], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if rankings.is_empty() || rankings.iter().any(Vec::is_empty) {
        return Err(Error::domain("empty ranking"));
    }
    if rankings.len() != truth.len() {
        return Err(Error::domain(format!("{} rankings for {} primitives", rankings.len(), truth.len())));
    }
    let hits = rankings
        .iter()
        .zip(truth)
        .filter(|(r, t)| r.iter().take(k).any(|s| s == *t))
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Per-primitive slot rankings read off a candidate ranking: distinct slots
/// in order of first appearance.
pub fn per_primitive_rankings(ranking: &Ranking) -> Vec<Vec<DensitySlot>> {
    let k = ranking.candidates.first().map_or(0, |c| c.slots.len());
    (0..k)
        .map(|j| {
            let mut out: Vec<DensitySlot> = Vec::new();
            for c in &ranking.candidates {
                if let Some(s) = c.slots.get(j) {
                    if !out.contains(s) {
                        out.push(*s);
                    }
                }
            }
            out
        })
        .collect()
}

/// Root-mean-square slot error, in slot units.
pub fn density_rmse(pred: &[DensitySlot], truth: &[DensitySlot]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::domain(format!("{} predictions for {} primitives", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::domain("RMSE of an empty set"));
    }
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let d = p.get() as f64 - t.get() as f64;
            d * d
        })
        .sum();
    Ok((sum / pred.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub size_weight: f64,
    pub translation_weight: f64,
    pub rotation_weight: f64,
    /// Weight of the physics term; `None` means calibrate it.
    pub physics_weight: Option<f64>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            size_weight: 1.0,
            translation_weight: 1.0,
            rotation_weight: 1.0,
            physics_weight: None,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.size_weight, self.translation_weight, self.rotation_weight];
        if w.iter().any(|v| !(*v > 0.0)) || self.physics_weight.is_some_and(|v| !(v > 0.0)) {
            return Err(Error::Config("metric weights must be positive".into()));
        }
        Ok(())
    }
}

/// Weighted L1 distance between matched primitive parameters. Quaternions
/// are compared after flipping into a common hemisphere.
pub fn geometry_loss(pred: &PrimitiveObject, truth: &PrimitiveObject, config: &MetricConfig) -> Result<f64> {
    config.validate()?;
    if pred.len() != truth.len() {
        return Err(Error::domain(format!("{} predicted primitives for {} true ones", pred.len(), truth.len())));
    }
    let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let total = pred
        .primitives()
        .iter()
        .zip(truth.primitives())
        .map(|(p, t)| {
            let qp = p.rotation().coords;
            let qt = t.rotation().coords;
            let sign = if qp.dot(&qt) < 0.0 { -1.0 } else { 1.0 };
            config.size_weight * l1(p.size().as_slice(), t.size().as_slice())
                + config.translation_weight * l1(p.translation().as_slice(), t.translation().as_slice())
                + config.rotation_weight * l1((qp * sign).as_slice(), qt.as_slice())
        })
        .sum();
    Ok(total)
}

/// Cross-entropy of the true slots under the prior, summed over primitives.
pub fn physics_loss(prior: &DensityPrior, truth: &[DensitySlot]) -> Result<f64> {
    if prior.num_primitives() != truth.len() {
        return Err(Error::domain(format!(
            "prior covers {} primitives, truth has {}",
            prior.num_primitives(),
            truth.len()
        )));
    }
    let mut total = 0.0;
    for (k, slot) in truth.iter().enumerate() {
        let p = prior.probabilities(k)[slot.index()];
        if p < PROB_FLOOR {
            log::warn!("primitive {k}: probability {p} at slot {} clamped to {PROB_FLOOR}", slot.get());
        }
        total -= p.max(PROB_FLOOR).ln();
    }
    Ok(total)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Physics weight that makes the two loss terms equal in median over a
/// calibration batch.
pub fn calibrate_physics_weight(geometry: &[f64], physics: &[f64]) -> Result<f64> {
    let (Some(g), Some(p)) = (median(geometry), median(physics)) else {
        return Err(Error::domain("calibration needs non-empty loss batches"));
    };
    if !(p > 0.0) || !(g > 0.0) {
        return Err(Error::domain(format!("cannot calibrate with median losses {g} and {p}")));
    }
    Ok(g / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::Candidate;
    use crate::model::{Pose, Primitive};
    use nalgebra::{UnitQuaternion, Vector3};
    use proptest::prelude::*;

    fn slots(v: &[u32]) -> Vec<DensitySlot> {
        v.iter().map(|&s| DensitySlot::new(s).unwrap()).collect()
    }

    fn traj(id: usize, x: f64) -> Trajectory {
        let poses = (0..8)
            .map(|i| Pose::new(Vector3::new(x + i as f64, 0.0, 0.0), UnitQuaternion::identity()))
            .collect();
        Trajectory::new(poses, 1.0 / 300.0, id).unwrap()
    }

    #[test]
    fn frequent_examples() {
        assert_eq!(baseline_frequent(slots(&[3, 3, 7])).unwrap().get(), 3);
        assert_eq!(baseline_frequent(slots(&[7, 3])).unwrap().get(), 3);
        assert!(baseline_frequent(Vec::new()).is_err());
    }

    #[test]
    fn frequent_on_uniform_training_set() {
        let all: Vec<DensitySlot> = DensitySlot::all().collect();
        let mode = baseline_frequent(all.clone()).unwrap();
        assert_eq!(mode.get(), 1);
        let rmse = density_rmse(&vec![mode; 100], &all).unwrap();
        let oracle = ((0..100).map(|i| (i * i) as f64).sum::<f64>() / 100.0).sqrt();
        assert!((rmse - oracle).abs() < 1e-12);
        assert!((rmse - 57.3).abs() < 0.05);
    }

    #[test]
    fn nearest_examples() {
        let train = vec![
            TrainItem {
                slots: slots(&[1, 2]),
                trajectories: vec![traj(0, 1.0)],
            },
            TrainItem {
                slots: slots(&[3, 4]),
                trajectories: vec![traj(0, 0.0)],
            },
        ];
        let m = baseline_nearest(&train, &[traj(0, 0.0)], DistanceMode::Mae).unwrap();
        assert_eq!((m.index, m.distance), (1, 0.0));
        assert_eq!(m.slots, slots(&[3, 4]));
        assert!(baseline_nearest(&train, &[traj(1, 0.0)], DistanceMode::Mae).is_err());
        assert!(baseline_nearest(&[], &[traj(0, 0.0)], DistanceMode::Mae).is_err());
    }

    #[test]
    fn oracle_stays_in_range_and_is_seeded() {
        for seed in 0..200 {
            let s = baseline_oracle(Material::Wood, seed);
            assert!((1..=10).contains(&s.get()));
            assert_eq!(s, baseline_oracle(Material::Wood, seed));
        }
    }

    #[test]
    fn topk_examples() {
        let r = vec![slots(&[7, 3, 9])];
        assert_eq!(topk_accuracy(&r, &slots(&[9]), 1).unwrap(), 0.0);
        assert_eq!(topk_accuracy(&r, &slots(&[9]), 3).unwrap(), 1.0);
        assert!(topk_accuracy(&[vec![]], &slots(&[9]), 1).is_err());
        assert!(topk_accuracy(&r, &slots(&[9]), 0).is_err());
    }

    #[test]
    fn random_ranking_top10_is_about_a_tenth() {
        use rand::seq::SliceRandom;
        let mut rng = seeded(1, STREAM_BASELINE);
        let all: Vec<DensitySlot> = DensitySlot::all().collect();
        let (mut hits, trials) = (0.0, 10_000);
        for _ in 0..trials {
            let mut r = all.clone();
            r.shuffle(&mut rng);
            let truth = random_guess(&mut rng);
            hits += topk_accuracy(&[r], &[truth], 10).unwrap();
        }
        assert!((hits / trials as f64 - 0.1).abs() < 0.01);
    }

    #[test]
    fn rankings_per_primitive() {
        let cand = |s: &[u32], score: f64| {
            serde_json::from_value::<Candidate>(serde_json::json!({
                "slots": s, "score": score, "distances": [], "sample": 0
            }))
            .unwrap()
        };
        let ranking = Ranking {
            mode: DistanceMode::Mse,
            candidates: vec![cand(&[5, 9], 0.0), cand(&[5, 2], 1.0), cand(&[6, 9], 2.0)],
            evaluated: 3,
            pruned: 0,
            diverged: 0,
        };
        assert_eq!(per_primitive_rankings(&ranking), vec![slots(&[5, 6]), slots(&[9, 2])]);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(density_rmse(&slots(&[4, 5]), &slots(&[4, 5])).unwrap(), 0.0);
        assert_eq!(density_rmse(&slots(&[10, 20]), &slots(&[15, 25])).unwrap(), 5.0);
        assert!(density_rmse(&slots(&[1]), &slots(&[1, 2])).is_err());
    }

    #[test]
    fn geometry_loss_examples() {
        let a = Primitive::cuboid([0.2, 0.2, 0.2], [0.0, 0.0, -0.4]).unwrap();
        let b = Primitive::cuboid([0.3, 0.2, 0.2], [0.0, 0.0, -0.4]).unwrap();
        let obj = |p: &Primitive| PrimitiveObject::new(vec![p.clone()]).unwrap();
        let cfg = MetricConfig::default();
        assert_eq!(geometry_loss(&obj(&a), &obj(&a), &cfg).unwrap(), 0.0);
        assert!((geometry_loss(&obj(&b), &obj(&a), &cfg).unwrap() - 0.1).abs() < 1e-12);
        // Rotations by pi -/+ eps store opposite x signs but are close.
        let r = |angle: f64| {
            let q = UnitQuaternion::from_euler_angles(angle, 0.0, 0.0);
            Primitive::new(Vector3::repeat(0.2), Vector3::zeros(), q, None).unwrap()
        };
        let eps = 1e-6;
        let loss = geometry_loss(&obj(&r(std::f64::consts::PI - eps)), &obj(&r(-std::f64::consts::PI + eps)), &cfg).unwrap();
        assert!(loss < 1e-5);
        let two = PrimitiveObject::new(vec![a.clone(), b.clone().with_density(None)]).unwrap();
        assert!(geometry_loss(&two, &obj(&a), &cfg).is_err());
    }

    #[test]
    fn physics_loss_examples() {
        let truth = slots(&[4]);
        assert_eq!(physics_loss(&DensityPrior::one_hot(&truth), &truth).unwrap(), 0.0);
        let mut row = vec![0.0; 100];
        row[3] = 0.5;
        row[4] = 0.5;
        let half = DensityPrior::new(vec![row]).unwrap();
        assert!((physics_loss(&half, &truth).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((physics_loss(&DensityPrior::uniform(1), &truth).unwrap() - 100f64.ln()).abs() < 1e-9);
        let miss = physics_loss(&DensityPrior::one_hot(&slots(&[5])), &truth).unwrap();
        assert!((miss + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn calibration_balances_medians() {
        let w = calibrate_physics_weight(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap();
        assert!((w - 0.1).abs() < 1e-15);
        assert!(calibrate_physics_weight(&[], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn rmse_is_a_metric(a in prop::collection::vec(1u32..=100, 5), b in prop::collection::vec(1u32..=100, 5), c in prop::collection::vec(1u32..=100, 5)) {
            let (a, b, c) = (slots(&a), slots(&b), slots(&c));
            let d = |x: &[DensitySlot], y: &[DensitySlot]| density_rmse(x, y).unwrap();
            prop_assert_eq!(d(&a, &a), 0.0);
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
            if a != b { prop_assert!(d(&a, &b) > 0.0); }
        }

        #[test]
        fn topk_is_monotone(r in prop::collection::vec(1u32..=100, 1..30), t in 1u32..=100) {
            let r = vec![slots(&r)];
            let t = slots(&[t]);
            let acc: Vec<f64> = [1, 5, 10].iter().map(|&k| topk_accuracy(&r, &t, k).unwrap()).collect();
            prop_assert!(acc[0] <= acc[1] && acc[1] <= acc[2]);
        }
    }
}
