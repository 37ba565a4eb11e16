//! Cuboid decomposition of voxel grids and primitive-level scoring.
//!
//! Fitting scans the grid bottom to top. Each `z` slice is summarized by the
//! rectangle bounding its occupied cells; consecutive slices whose rectangles
//! agree within the merge tolerance form one segment, and each segment becomes
//! the tight axis-aligned box around its cells. This is exact for stacked
//! towers whose blocks are aligned to the grid.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Primitive, PrimitiveObject, MAX_PRIMITIVES};
use crate::voxel::VoxelGrid;

/// Grid resolution used to approximate the IoU of rotated cuboids.
pub const IOU_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Segments with fewer occupied cells are merged into a neighbor.
    pub min_volume: usize,
    /// Largest per-edge footprint change (in cells) that keeps a slice in the
    /// current segment.
    pub merge_tolerance: usize,
    pub max_primitives: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            min_volume: 8,
            merge_tolerance: 1,
            max_primitives: MAX_PRIMITIVES,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_volume == 0 || self.max_primitives == 0 || self.max_primitives > MAX_PRIMITIVES {
            return Err(Error::Config(format!(
                "fit: min_volume must be positive and max_primitives in 1..={MAX_PRIMITIVES}"
            )));
        }
        Ok(())
    }
}

/// Inclusive cell rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rect {
    x: [usize; 2],
    y: [usize; 2],
}

impl Rect {
    fn within(&self, other: &Rect, tol: usize) -> bool {
        (0..2).all(|e| self.x[e].abs_diff(other.x[e]) <= tol && self.y[e].abs_diff(other.y[e]) <= tol)
    }
}

#[derive(Debug, Clone)]
struct Segment {
    z: [usize; 2],
    reference: Rect,
    lo: [usize; 2],
    hi: [usize; 2],
    cells: usize,
}

impl Segment {
    fn absorb(&mut self, other: &Segment) {
        self.z = [self.z[0].min(other.z[0]), self.z[1].max(other.z[1])];
        for a in 0..2 {
            self.lo[a] = self.lo[a].min(other.lo[a]);
            self.hi[a] = self.hi[a].max(other.hi[a]);
        }
        self.cells += other.cells;
    }
}

fn slice_rects(grid: &VoxelGrid) -> Vec<Option<(Rect, usize)>> {
    let d = grid.resolution();
    let mut out = vec![None::<(Rect, usize)>; d];
    for (x, y, z) in grid.occupied() {
        let entry = out[z].get_or_insert((Rect { x: [x, x], y: [y, y] }, 0));
        let r = &mut entry.0;
        r.x = [r.x[0].min(x), r.x[1].max(x)];
        r.y = [r.y[0].min(y), r.y[1].max(y)];
        entry.1 += 1;
    }
    out
}

/// Fit axis-aligned cuboids to a grid. The result carries geometry only.
pub fn fit_primitives(grid: &VoxelGrid, config: &FitConfig) -> Result<PrimitiveObject> {
    config.validate()?;
    let slices = slice_rects(grid);
    let mut segments: Vec<Segment> = Vec::new();
    let mut prev_empty = true;
    for (z, slice) in slices.iter().enumerate() {
        let Some((rect, cells)) = slice else {
            prev_empty = true;
            continue;
        };
        let joins = !prev_empty
            && segments
                .last()
                .is_some_and(|s| rect.within(&s.reference, config.merge_tolerance));
        if joins {
            let s = segments.last_mut().expect("checked above");
            s.absorb(&Segment {
                z: [z, z],
                reference: *rect,
                lo: [rect.x[0], rect.y[0]],
                hi: [rect.x[1], rect.y[1]],
                cells: *cells,
            });
        } else {
            segments.push(Segment {
                z: [z, z],
                reference: *rect,
                lo: [rect.x[0], rect.y[0]],
                hi: [rect.x[1], rect.y[1]],
                cells: *cells,
            });
        }
        prev_empty = false;
    }
    if segments.is_empty() {
        return Err(Error::Fit("grid has no occupied cells".into()));
    }

    // Fold undersized segments into the neighbor below (or above for the base).
    while segments.len() > 1 {
        let Some(k) = segments.iter().position(|s| s.cells < config.min_volume) else {
            break;
        };
        let small = segments.remove(k);
        let into = if k == 0 { 0 } else { k - 1 };
        segments[into].absorb(&small);
    }

    if segments.len() > config.max_primitives {
        return Err(Error::Fit(format!(
            "{} segments exceed the limit of {}; raise merge_tolerance or min_volume",
            segments.len(),
            config.max_primitives
        )));
    }

    let h = grid.cell_size();
    let t = grid.translate();
    let prims = segments
        .iter()
        .map(|s| {
            let lo = Vector3::new(s.lo[0] as f64, s.lo[1] as f64, s.z[0] as f64);
            let hi = Vector3::new(s.hi[0] as f64 + 1.0, s.hi[1] as f64 + 1.0, s.z[1] as f64 + 1.0);
            let size = (hi - lo) * h;
            let center = Vector3::from(t) + (lo + hi) * (h / 2.0);
            Primitive::cuboid(size.into(), center.into())
        })
        .collect::<Result<Vec<_>>>()?;
    PrimitiveObject::new(prims)
}

/// Volume intersection over union of two cuboids. Exact for axis-aligned
/// pairs; otherwise estimated on a `64^3` sampling of their joint bounds.
pub fn cuboid_iou(a: &Primitive, b: &Primitive) -> Result<f64> {
    let (va, vb) = (a.volume(), b.volume());
    if va <= 0.0 || vb <= 0.0 {
        return Err(Error::domain("IoU of a zero-volume cuboid"));
    }
    let (alo, ahi) = a.bounds();
    let (blo, bhi) = b.bounds();
    if a.is_axis_aligned() && b.is_axis_aligned() {
        let overlap = (ahi.inf(&bhi) - alo.sup(&blo)).map(|v| v.max(0.0));
        let inter = overlap.x * overlap.y * overlap.z;
        return Ok(inter / (va + vb - inter));
    }
    let lo = alo.inf(&blo);
    let span = ahi.sup(&bhi) - lo;
    let n = IOU_SAMPLES;
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let f = Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) / n as f64;
                let p = lo + span.component_mul(&f);
                let (ia, ib) = (a.contains(&p), b.contains(&p));
                inter += (ia && ib) as usize;
                union += (ia || ib) as usize;
            }
        }
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Counts behind an F1 score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchSummary {
    pub true_positives: usize,
    pub predicted: usize,
    pub truth: usize,
}

impl MatchSummary {
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.truth)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Greedy one-to-one matching in descending IoU; a pair counts when its IoU
/// exceeds one half.
pub fn match_primitives(pred: &PrimitiveObject, truth: &PrimitiveObject) -> MatchSummary {
    let mut pairs = Vec::new();
    for (i, p) in pred.primitives().iter().enumerate() {
        for (j, t) in truth.primitives().iter().enumerate() {
            let iou = cuboid_iou(p, t).unwrap_or(0.0);
            if iou > 0.5 {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut used_p = vec![false; pred.len()];
    let mut used_t = vec![false; truth.len()];
    let mut tp = 0;
    for (_, i, j) in pairs {
        if !used_p[i] && !used_t[j] {
            used_p[i] = true;
            used_t[j] = true;
            tp += 1;
        }
    }
    MatchSummary {
        true_positives: tp,
        predicted: pred.len(),
        truth: truth.len(),
    }
}

pub fn f1_score(pred: &PrimitiveObject, truth: &PrimitiveObject) -> f64 {
    match_primitives(pred, truth).f1()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::towergen::{sample_tower, TowerSpec};
    use crate::voxel::voxelize;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;
    use proptest::prelude::*;

    fn cuboid(size: [f64; 3], center: [f64; 3]) -> Primitive {
        Primitive::cuboid(size, center).unwrap()
    }

    fn object(prims: Vec<Primitive>) -> PrimitiveObject {
        PrimitiveObject::new(prims).unwrap()
    }

    #[test]
    fn iou_closed_forms() {
        let a = cuboid([0.2; 3], [0.0; 3]);
        assert_eq!(cuboid_iou(&a, &a).unwrap(), 1.0);
        let b = cuboid([0.2; 3], [0.1, 0.0, 0.0]);
        assert_relative_eq!(cuboid_iou(&a, &b).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
        let c = cuboid([0.2; 3], [0.3, 0.0, 0.0]);
        assert_eq!(cuboid_iou(&a, &c).unwrap(), 0.0);
    }

    #[test]
    fn rotated_iou_is_sampled() {
        let a = cuboid([0.4; 3], [0.0; 3]);
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let b = Primitive::new(Vector3::repeat(0.4), Vector3::zeros(), q, None).unwrap();
        assert!(cuboid_iou(&a, &b).unwrap() > 0.98);
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_4);
        let b = Primitive::new(Vector3::new(0.4, 0.4, 0.2), Vector3::zeros(), q, None).unwrap();
        let a = cuboid([0.4, 0.4, 0.2], [0.0; 3]);
        // Square rotated by 45 degrees against itself: overlap is an octagon.
        let inter = 8.0 * (2f64.sqrt() - 1.0) * 0.04;
        let exact = inter / (2.0 * 0.16 - inter);
        assert!((cuboid_iou(&a, &b).unwrap() - exact).abs() < 0.02 * exact);
    }

    #[test]
    fn f1_closed_forms() {
        let a = cuboid([0.4, 0.4, 0.2], [0.0, 0.0, -0.4]);
        let b = cuboid([0.2, 0.2, 0.2], [0.0, 0.0, -0.2]);
        let truth = object(vec![a.clone(), b.clone()]);
        assert_eq!(f1_score(&truth, &truth), 1.0);
        let half = object(vec![a.clone()]);
        let m = match_primitives(&half, &truth);
        assert_eq!((m.precision(), m.recall()), (1.0, 0.5));
        assert_relative_eq!(m.f1(), 2.0 / 3.0, epsilon = 1e-12);
        let off = object(vec![cuboid([0.4, 0.4, 0.2], [0.3, 0.0, -0.4])]);
        assert_eq!(f1_score(&off, &truth), 0.0);
    }

    #[test]
    fn full_cube_fits_one_primitive() {
        let full = object(vec![cuboid([1.0; 3], [0.0; 3])]);
        let grid = voxelize(&full, 32).unwrap();
        let fit = fit_primitives(&grid, &FitConfig::default()).unwrap();
        assert_eq!(fit.len(), 1);
        assert_relative_eq!(*fit.primitives()[0].size(), Vector3::repeat(1.0), epsilon = 1e-12);
        assert_relative_eq!(*fit.primitives()[0].translation(), Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn empty_grid_is_a_fit_error() {
        let grid = VoxelGrid::empty(32).unwrap();
        assert!(matches!(fit_primitives(&grid, &FitConfig::default()), Err(Error::Fit(_))));
    }

    #[test]
    fn too_many_segments_is_a_fit_error() {
        let cfg = FitConfig {
            max_primitives: 1,
            ..FitConfig::default()
        };
        let two = object(vec![
            cuboid([0.5, 0.5, 0.25], [0.0, 0.0, -0.375]),
            cuboid([0.25, 0.25, 0.25], [0.0, 0.0, -0.125]),
        ]);
        let grid = voxelize(&two, 32).unwrap();
        assert!(matches!(fit_primitives(&grid, &cfg), Err(Error::Fit(_))));
        assert_eq!(fit_primitives(&grid, &FitConfig::default()).unwrap().len(), 2);
    }

    #[test]
    fn grid_aligned_towers_round_trip() {
        for seed in 0..40 {
            let tower = sample_tower(&TowerSpec::new(2 + seed as usize % 4, seed).grid_aligned(32)).unwrap();
            let grid = voxelize(&tower, 32).unwrap();
            let fit = fit_primitives(&grid, &FitConfig::default()).unwrap();
            assert_eq!(fit.len(), tower.len(), "seed {seed}");
            for (p, t) in fit.primitives().iter().zip(tower.primitives()) {
                assert_relative_eq!(p.size(), t.size(), epsilon = 1e-9);
                assert_relative_eq!(p.translation(), t.translation(), epsilon = 1e-9);
            }
            assert_eq!(f1_score(&fit, &tower), 1.0);
            let covered: usize = fit
                .primitives()
                .iter()
                .map(|p| (p.volume() * 32f64.powi(3)).round() as usize)
                .sum();
            assert_eq!(covered, grid.occupied_count());
        }
    }

    #[test]
    fn unaligned_towers_fit_within_half_a_cell() {
        let h = 1.0 / 32.0;
        let mut exact = 0;
        for seed in 0..40 {
            let tower = sample_tower(&TowerSpec::new(2, seed)).unwrap();
            let fit = fit_primitives(&voxelize(&tower, 32).unwrap(), &FitConfig::default()).unwrap();
            if fit.len() != 2 {
                continue;
            }
            exact += 1;
            for (p, t) in fit.primitives().iter().zip(tower.primitives()) {
                let (plo, phi) = p.bounds();
                let (tlo, thi) = t.bounds();
                assert!((plo - tlo).amax() <= h / 2.0 + 1e-9 && (phi - thi).amax() <= h / 2.0 + 1e-9);
            }
        }
        assert!(exact >= 30, "{exact}");
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_scale_invariant(
            s1 in prop::array::uniform3(0.05f64..0.4), s2 in prop::array::uniform3(0.05f64..0.4),
            c1 in prop::array::uniform3(-0.2f64..0.2), c2 in prop::array::uniform3(-0.2f64..0.2),
            k in 0.3f64..1.0,
        ) {
            let a = cuboid(s1, c1);
            let b = cuboid(s2, c2);
            let ab = cuboid_iou(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, cuboid_iou(&b, &a).unwrap());
            let scale = |v: [f64; 3]| v.map(|x| x * k);
            let sa = cuboid(scale(s1), scale(c1));
            let sb = cuboid(scale(s2), scale(c2));
            prop_assert!((cuboid_iou(&sa, &sb).unwrap() - ab).abs() < 1e-9);
        }

        #[test]
        fn f1_ignores_input_order(seed in 0u64..200) {
            let tower = sample_tower(&TowerSpec::new(3, seed)).unwrap();
            let mut prims = tower.primitives().to_vec();
            prims.reverse();
            let shuffled = crate::model::canonical_order(prims).unwrap();
            prop_assert_eq!(f1_score(&shuffled, &tower), 1.0);
        }
    }
}
