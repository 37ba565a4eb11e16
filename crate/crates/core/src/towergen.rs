//! Synthetic block towers.
//!
//! Blocks are stacked bottom to top. Block `k` has size `(w, h, d)` drawn
//! uniformly from `[0.1, 0.5]` per axis and center
//!
//! ```text
//! x_k ~ N(x_{k-1}, w_{k-1} / 4)
//! y_k ~ N(y_{k-1}, h_{k-1} / 4)
//! z_k = z_{k-1} + (d_{k-1} + d_k) / 2
//! ```
//!
//! with the first block centered at the origin and resting on `z = -0.5`.
//! Offsets are redrawn (at most 100 times per block) until the block's
//! footprint overlaps its predecessor's by a quarter of the smaller footprint
//! and its center lies over the base block, which keeps every density
//! assignment standing. The stacked tower is then scaled uniformly to fit the
//! unit cube, centered in `x`/`y` and put back on the ground.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DensitySlot, Material, Primitive, PrimitiveObject};
use crate::rng::{seeded, STREAM_DENSITY, STREAM_TOWER};

pub const MIN_BLOCKS: usize = 2;
pub const MAX_BLOCKS: usize = 5;
pub const MIN_BLOCK_SIZE: f64 = 0.1;
pub const MAX_BLOCK_SIZE: f64 = 0.5;
pub const GROUND_Z: f64 = -0.5;
/// Minimum footprint overlap of consecutive blocks, relative to the smaller one.
pub const MIN_OVERLAP: f64 = 0.25;
/// Block centers stay this fraction of the base half-width away from its edges.
pub const BASE_MARGIN: f64 = 0.1;
const OFFSET_ATTEMPTS: usize = 100;
const TOWER_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TowerSpec {
    pub num_blocks: usize,
    pub seed: u64,
    #[serde(default = "default_configs")]
    pub num_density_configs: usize,
    /// Snap block faces to a voxel grid of this resolution.
    #[serde(default)]
    pub grid: Option<u32>,
}

fn default_configs() -> usize {
    8
}

impl TowerSpec {
    pub fn new(num_blocks: usize, seed: u64) -> Self {
        TowerSpec {
            num_blocks,
            seed,
            num_density_configs: default_configs(),
            grid: None,
        }
    }

    pub fn grid_aligned(mut self, resolution: u32) -> Self {
        self.grid = Some(resolution);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_BLOCKS..=MAX_BLOCKS).contains(&self.num_blocks) {
            return Err(Error::Validation {
                what: "tower spec",
                reason: format!(
                    "num_blocks {} outside {MIN_BLOCKS}..={MAX_BLOCKS}",
                    self.num_blocks
                ),
            });
        }
        if self.num_density_configs == 0 {
            return Err(Error::Validation {
                what: "tower spec",
                reason: "num_density_configs must be at least 1".into(),
            });
        }
        if let Some(r) = self.grid {
            if r < 8 || !r.is_power_of_two() {
                return Err(Error::Validation {
                    what: "tower spec",
                    reason: format!("grid resolution {r} must be a power of two >= 8"),
                });
            }
        }
        Ok(())
    }
}

/// A block before normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub size: Vector3<f64>,
    pub center: Vector3<f64>,
}

impl Block {
    fn footprint(&self) -> [f64; 4] {
        [
            self.center.x - self.size.x / 2.0,
            self.center.x + self.size.x / 2.0,
            self.center.y - self.size.y / 2.0,
            self.center.y + self.size.y / 2.0,
        ]
    }
}

/// Height of the next block's center for the stacking rule.
pub fn stacked_center_z(prev_z: f64, prev_depth: f64, depth: f64) -> f64 {
    prev_z + (prev_depth + depth) / 2.0
}

/// Overlap area of two footprints divided by the smaller footprint's area.
pub fn footprint_overlap(a: &Block, b: &Block) -> f64 {
    let fa = a.footprint();
    let fb = b.footprint();
    let ox = (fa[1].min(fb[1]) - fa[0].max(fb[0])).max(0.0);
    let oy = (fa[3].min(fb[3]) - fa[2].max(fb[2])).max(0.0);
    let smaller = (a.size.x * a.size.y).min(b.size.x * b.size.y);
    ox * oy / smaller
}

fn over_base(base: &Block, center: &Vector3<f64>, margin: f64) -> bool {
    let hx = base.size.x / 2.0 * (1.0 - margin);
    let hy = base.size.y / 2.0 * (1.0 - margin);
    (center.x - base.center.x).abs() <= hx && (center.y - base.center.y).abs() <= hy
}

/// Stack `num_blocks` blocks following the sampling rules (no normalization).
pub fn stack_blocks<R: Rng + ?Sized>(num_blocks: usize, rng: &mut R) -> Result<Vec<Block>> {
    let mut blocks: Vec<Block> = Vec::with_capacity(num_blocks);
    for k in 0..num_blocks {
        let size = Vector3::from_fn(|_, _| rng.random_range(MIN_BLOCK_SIZE..=MAX_BLOCK_SIZE));
        let Some(prev) = blocks.last().copied() else {
            blocks.push(Block {
                size,
                center: Vector3::new(0.0, 0.0, GROUND_Z + size.z / 2.0),
            });
            continue;
        };
        let z = stacked_center_z(prev.center.z, prev.size.z, size.z);
        let nx = Normal::new(prev.center.x, prev.size.x / 4.0).expect("positive sigma");
        let ny = Normal::new(prev.center.y, prev.size.y / 4.0).expect("positive sigma");
        let base = blocks[0];
        let placed = (0..OFFSET_ATTEMPTS).find_map(|_| {
            let candidate = Block {
                size,
                center: Vector3::new(nx.sample(rng), ny.sample(rng), z),
            };
            (footprint_overlap(&prev, &candidate) >= MIN_OVERLAP
                && over_base(&base, &candidate.center, BASE_MARGIN))
            .then_some(candidate)
        });
        match placed {
            Some(b) => blocks.push(b),
            None => {
                return Err(Error::Generation(format!(
                    "no valid offset for block {k} after {OFFSET_ATTEMPTS} draws"
                )))
            }
        }
    }
    Ok(blocks)
}

/// Scale blocks uniformly so the tower fits the unit cube, center it in
/// `x`/`y`, and rest it on the ground plane.
pub fn normalize_blocks(blocks: &[Block]) -> Vec<Block> {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for b in blocks {
        lo = lo.inf(&(b.center - b.size / 2.0));
        hi = hi.sup(&(b.center + b.size / 2.0));
    }
    let extent = (hi - lo).max();
    let scale = if extent > 1.0 { 1.0 / extent } else { 1.0 };
    let mid = (lo + hi) / 2.0;
    blocks
        .iter()
        .map(|b| Block {
            size: b.size * scale,
            center: Vector3::new(
                (b.center.x - mid.x) * scale,
                (b.center.y - mid.y) * scale,
                (b.center.z - lo.z) * scale + GROUND_Z,
            ),
        })
        .collect()
}

/// Integer cell bounds `[lo, hi)` per axis.
type CellBox = [[i64; 2]; 3];

fn snap_blocks(blocks: &[Block], resolution: u32) -> Option<Vec<Block>> {
    let r = resolution as i64;
    let rf = resolution as f64;
    let mut boxes: Vec<CellBox> = Vec::with_capacity(blocks.len());
    let mut z_lo = 0;
    for b in blocks {
        let mut cells = [[0i64; 2]; 3];
        for axis in 0..2 {
            let lo = ((b.center[axis] - b.size[axis] / 2.0 + 0.5) * rf).round() as i64;
            let hi = ((b.center[axis] + b.size[axis] / 2.0 + 0.5) * rf).round() as i64;
            let (mut lo, mut hi) = (lo.clamp(0, r), hi.clamp(0, r));
            if hi - lo < 2 {
                hi = (lo + 2).min(r);
                lo = hi - 2;
            }
            cells[axis] = [lo, hi];
        }
        let depth = ((b.size.z * rf).round() as i64).max(2);
        cells[2] = [z_lo, z_lo + depth];
        z_lo += depth;
        boxes.push(cells);
    }
    if z_lo > r {
        return None;
    }
    let snapped: Vec<Block> = boxes
        .iter()
        .map(|c| Block {
            size: Vector3::from_fn(|i, _| (c[i][1] - c[i][0]) as f64 / rf),
            center: Vector3::from_fn(|i, _| (c[i][0] + c[i][1]) as f64 / (2.0 * rf) - 0.5),
        })
        .collect();
    for (k, pair) in boxes.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        // Consecutive footprints must differ by at least two cells on some edge
        // so the cross-sections stay distinguishable after voxelization.
        let distinct = (0..2).any(|axis| (0..2).any(|e| (a[axis][e] - b[axis][e]).abs() >= 2));
        if !distinct
            || footprint_overlap(&snapped[k], &snapped[k + 1]) < MIN_OVERLAP
            || !over_base(&snapped[0], &snapped[k + 1].center, 0.0)
        {
            return None;
        }
    }
    Some(snapped)
}

fn blocks_to_object(blocks: &[Block]) -> Result<PrimitiveObject> {
    let prims = blocks
        .iter()
        .map(|b| Primitive::cuboid(b.size.into(), b.center.into()))
        .collect::<Result<Vec<_>>>()?;
    PrimitiveObject::new(prims)
}

/// Sample tower geometry (densities unset). Deterministic in `spec`.
pub fn sample_tower(spec: &TowerSpec) -> Result<PrimitiveObject> {
    spec.validate()?;
    let mut rng = seeded(spec.seed, STREAM_TOWER);
    let mut last_err = None;
    for _ in 0..TOWER_ATTEMPTS {
        let blocks = match stack_blocks(spec.num_blocks, &mut rng) {
            Ok(b) => b,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let blocks = normalize_blocks(&blocks);
        let blocks = match spec.grid {
            Some(r) => match snap_blocks(&blocks, r) {
                Some(b) => b,
                None => {
                    last_err = Some(Error::Generation(format!(
                        "tower does not survive snapping to a {r}^3 grid"
                    )));
                    continue;
                }
            },
            None => blocks,
        };
        return blocks_to_object(&blocks);
    }
    Err(last_err.unwrap_or_else(|| Error::Generation("tower sampling failed".into())))
}

/// Draw `count` density configurations for a tower: each block gets a
/// uniformly chosen material and a slot uniform over that material's range.
pub fn assign_densities(
    tower: &PrimitiveObject,
    count: usize,
    seed: u64,
) -> Result<Vec<PrimitiveObject>> {
    let mut rng = seeded(seed, STREAM_DENSITY);
    (0..count)
        .map(|_| {
            let (materials, slots) = draw_materials(tower.len(), &mut rng);
            tower
                .with_slots(&slots)?
                .with_material_labels(Some(materials))
        })
        .collect()
}

/// One material-then-slot draw per block.
pub fn draw_materials<R: Rng + ?Sized>(
    count: usize,
    rng: &mut R,
) -> (Vec<Material>, Vec<DensitySlot>) {
    (0..count)
        .map(|_| {
            let material = Material::ALL[rng.random_range(0..Material::ALL.len())];
            let slots = material.slots();
            (material, slots[rng.random_range(0..slots.len())])
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacking_formula_example() {
        let z1 = GROUND_Z + 0.2 / 2.0;
        assert!((z1 - -0.4).abs() < 1e-15);
        assert!((stacked_center_z(z1, 0.2, 0.3) - -0.15).abs() < 1e-15);
    }

    #[test]
    fn raw_stacking_is_exact() {
        let mut rng = seeded(11, STREAM_TOWER);
        for _ in 0..200 {
            let Ok(blocks) = stack_blocks(5, &mut rng) else { continue };
            assert_eq!(blocks[0].center.z, GROUND_Z + blocks[0].size.z / 2.0);
            for w in blocks.windows(2) {
                assert_eq!(w[1].center.z, stacked_center_z(w[0].center.z, w[0].size.z, w[1].size.z));
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let spec = TowerSpec::new(2, 42);
        assert_eq!(sample_tower(&spec).unwrap(), sample_tower(&spec).unwrap());
        let other = TowerSpec::new(2, 43);
        assert_ne!(sample_tower(&spec).unwrap(), sample_tower(&other).unwrap());
    }

    #[test]
    fn population_satisfies_invariants() {
        for seed in 0..1000 {
            let tower = sample_tower(&TowerSpec::new(3, seed)).unwrap();
            assert_eq!(tower.len(), 3);
            let (lo, hi) = tower.bounds();
            assert!(lo.min() >= -0.5 - 1e-12 && hi.max() <= 0.5 + 1e-12, "seed {seed}");
            assert!((lo.z - GROUND_Z).abs() < 1e-12);
            let blocks: Vec<Block> = tower
                .primitives()
                .iter()
                .map(|p| Block {
                    size: *p.size(),
                    center: *p.translation(),
                })
                .collect();
            for (k, w) in blocks.windows(2).enumerate() {
                assert!(w.iter().all(|b| b.size.max() <= MAX_BLOCK_SIZE));
                assert!(footprint_overlap(&w[0], &w[1]) >= MIN_OVERLAP - 1e-12, "seed {seed} block {k}");
                // Consecutive blocks touch.
                let top = w[0].center.z + w[0].size.z / 2.0;
                let bottom = w[1].center.z - w[1].size.z / 2.0;
                assert!((top - bottom).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_aligned_faces_lie_on_cells() {
        for seed in 0..200 {
            let tower = sample_tower(&TowerSpec::new(4, seed).grid_aligned(32)).unwrap();
            for p in tower.primitives() {
                let (lo, hi) = p.bounds();
                for v in lo.iter().chain(hi.iter()) {
                    let cells = (v + 0.5) * 32.0;
                    assert_eq!(cells, cells.round(), "seed {seed}");
                }
            }
        }
    }

    #[test]
    fn densities_respect_materials() {
        let tower = sample_tower(&TowerSpec::new(4, 5)).unwrap();
        let configs = assign_densities(&tower, 8, 5).unwrap();
        assert_eq!(configs.len(), 8);
        for c in &configs {
            let slots = c.slots().unwrap();
            for (m, s) in c.materials().unwrap().iter().zip(&slots) {
                assert!(m.contains(*s));
            }
            assert_eq!(c.geometry(), tower);
        }
        assert_eq!(configs, assign_densities(&tower, 8, 5).unwrap());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(sample_tower(&TowerSpec::new(1, 0)).is_err());
        assert!(sample_tower(&TowerSpec::new(6, 0)).is_err());
        let mut spec = TowerSpec::new(3, 0);
        spec.num_density_configs = 0;
        assert!(spec.validate().is_err());
    }
}
