//! Discretized densities and the material table.
//!
//! Densities live on 100 integer slots; slot `i` is `i * 100` kg/m³. This is
//! the single place where slot units are converted to physical units.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of density slots.
pub const NUM_SLOTS: usize = 100;

/// kg/m³ per slot.
pub const SLOT_UNIT: f64 = 100.0;

/// A density class in `1..=100`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct DensitySlot(u8);

impl DensitySlot {
    pub const MIN: DensitySlot = DensitySlot(1);
    pub const MAX: DensitySlot = DensitySlot(NUM_SLOTS as u8);

    pub fn new(slot: u32) -> Result<Self> {
        if (1..=NUM_SLOTS as u32).contains(&slot) {
            Ok(DensitySlot(slot as u8))
        } else {
            Err(Error::domain(format!(
                "density slot {slot} outside 1..={NUM_SLOTS}"
            )))
        }
    }

    pub fn get(self) -> u32 {
        self.0 as u32
    }

    /// Zero-based index into a 100-element probability vector.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::new(index as u32 + 1)
    }

    /// Physical density in kg/m³.
    pub fn density(self) -> f64 {
        self.0 as f64 * SLOT_UNIT
    }

    pub fn all() -> impl Iterator<Item = DensitySlot> {
        (1..=NUM_SLOTS as u8).map(DensitySlot)
    }
}

impl TryFrom<u32> for DensitySlot {
    type Error = Error;

    fn try_from(value: u32) -> Result<Self> {
        Self::new(value)
    }
}

impl From<DensitySlot> for u32 {
    fn from(slot: DensitySlot) -> u32 {
        slot.get()
    }
}

impl fmt::Display for DensitySlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Density in kg/m³ for a raw slot number.
pub fn slot_density(slot: u32) -> Result<f64> {
    DensitySlot::new(slot).map(DensitySlot::density)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Material {
    Wood,
    Brick,
    Stone,
    Ceramic,
    Metal,
}

impl Material {
    pub const ALL: [Material; 5] = [
        Material::Wood,
        Material::Brick,
        Material::Stone,
        Material::Ceramic,
        Material::Metal,
    ];

    /// Inclusive slot intervals for this material.
    pub fn slot_ranges(self) -> &'static [RangeInclusive<u8>] {
        match self {
            Material::Wood => &[1..=10],
            Material::Brick => &[11..=20],
            Material::Stone => &[21..=30],
            Material::Ceramic => &[31..=60],
            Material::Metal => &[21..=35, 71..=100],
        }
    }

    /// Every valid slot for this material, ascending.
    pub fn slots(self) -> Vec<DensitySlot> {
        self.slot_ranges()
            .iter()
            .flat_map(|r| r.clone().map(DensitySlot))
            .collect()
    }

    pub fn contains(self, slot: DensitySlot) -> bool {
        self.slot_ranges().iter().any(|r| r.contains(&slot.0))
    }

    pub fn name(self) -> &'static str {
        match self {
            Material::Wood => "Wood",
            Material::Brick => "Brick",
            Material::Stone => "Stone",
            Material::Ceramic => "Ceramic",
            Material::Metal => "Metal",
        }
    }
}

impl FromStr for Material {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Material::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::domain(format!("unknown material {s:?}")))
    }
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Valid slots of a material given by name.
pub fn material_slots(name: &str) -> Result<Vec<DensitySlot>> {
    name.parse::<Material>().map(Material::slots)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slots(range: RangeInclusive<u32>) -> Vec<DensitySlot> {
        range.map(|s| DensitySlot::new(s).unwrap()).collect()
    }

    #[test]
    fn slot_density_examples() {
        assert_eq!(slot_density(1).unwrap(), 100.0);
        assert_eq!(slot_density(100).unwrap(), 10_000.0);
        assert_eq!(slot_density(25).unwrap(), 2_500.0);
        assert!(slot_density(0).is_err());
        assert!(slot_density(101).is_err());
    }

    #[test]
    fn slot_density_is_strictly_increasing_bijection() {
        let values: Vec<f64> = DensitySlot::all().map(DensitySlot::density).collect();
        assert_eq!(values.len(), 100);
        for (i, v) in values.iter().enumerate() {
            assert_eq!(*v, (i as f64 + 1.0) * 100.0);
        }
        assert!(values.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn material_table() {
        assert_eq!(material_slots("Stone").unwrap(), slots(21..=30));
        assert_eq!(material_slots("Wood").unwrap(), slots(1..=10));
        assert_eq!(material_slots("Brick").unwrap(), slots(11..=20));
        assert_eq!(material_slots("Ceramic").unwrap(), slots(31..=60));
        let mut metal = slots(21..=35);
        metal.extend(slots(71..=100));
        assert_eq!(material_slots("Metal").unwrap(), metal);
        assert!(material_slots("Plastic").is_err());
    }

    #[test]
    fn material_overlaps_follow_table() {
        for (i, a) in Material::ALL.iter().enumerate() {
            for b in &Material::ALL[i + 1..] {
                let shared: Vec<_> = a.slots().into_iter().filter(|s| b.contains(*s)).collect();
                match (a, b) {
                    (Material::Stone, Material::Metal) => assert_eq!(shared, slots(21..=30)),
                    (Material::Ceramic, Material::Metal) => assert_eq!(shared, slots(31..=35)),
                    _ => assert!(shared.is_empty(), "{a} and {b} overlap"),
                }
            }
        }
    }

    #[test]
    fn slot_serde_rejects_out_of_range() {
        assert!(serde_json::from_str::<DensitySlot>("0").is_err());
        assert_eq!(serde_json::from_str::<DensitySlot>("42").unwrap().get(), 42);
    }
}
