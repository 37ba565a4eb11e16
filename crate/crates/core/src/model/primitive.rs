//! Cuboid primitives and ordered primitive objects.

use std::cmp::Ordering;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::density::{DensitySlot, Material};
use crate::error::{Error, Result};

/// Upper bound on generated primitive sizes (per axis, meters).
pub const SIZE_SCALE: f64 = 0.5;
/// Bound on primitive center coordinates (per axis, meters).
pub const TRANSLATION_SCALE: f64 = 0.5;
/// Largest extent a primitive may have: the side of the unit cube.
pub const MAX_SIZE: f64 = 2.0 * SIZE_SCALE;
/// Maximum primitives per object.
pub const MAX_PRIMITIVES: usize = 8;
/// Tolerance on quaternion norms.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Flip a quaternion into the `w >= 0` hemisphere. When `w == 0` the first
/// non-zero vector component is made positive.
pub fn canonical_quaternion(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let c = q.quaternion().coords; // (i, j, k, w)
    let flip = if c[3] != 0.0 {
        c[3] < 0.0
    } else {
        [c[0], c[1], c[2]]
            .into_iter()
            .find(|v| *v != 0.0)
            .is_some_and(|v| v < 0.0)
    };
    if flip {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Build a unit quaternion from `(w, x, y, z)` components, rejecting inputs
/// whose norm is not 1 within [`UNIT_TOLERANCE`].
pub fn quaternion_from_wxyz(wxyz: [f64; 4]) -> Result<UnitQuaternion<f64>> {
    let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
    let norm = q.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::Validation {
            what: "rotation",
            reason: format!("quaternion norm {norm} is not 1"),
        });
    }
    Ok(canonical_quaternion(UnitQuaternion::new_unchecked(q)))
}

pub fn quaternion_to_wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

/// One cuboid part: full extents, center, orientation and an optional density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PrimitiveRecord", into = "PrimitiveRecord")]
pub struct Primitive {
    size: Vector3<f64>,
    translation: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
    density: Option<DensitySlot>,
}

impl Primitive {
    pub fn new(
        size: Vector3<f64>,
        translation: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
        density: Option<DensitySlot>,
    ) -> Result<Self> {
        for (axis, s) in size.iter().enumerate() {
            if !(s.is_finite() && *s > 0.0 && *s <= MAX_SIZE) {
                return Err(Error::Validation {
                    what: "primitive",
                    reason: format!("size[{axis}] = {s} outside (0, {MAX_SIZE}]"),
                });
            }
        }
        for (axis, p) in translation.iter().enumerate() {
            if !(p.is_finite() && p.abs() <= TRANSLATION_SCALE) {
                return Err(Error::Validation {
                    what: "primitive",
                    reason: format!("translation[{axis}] = {p} outside [-0.5, 0.5]"),
                });
            }
        }
        let norm = rotation.quaternion().norm();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::Validation {
                what: "primitive",
                reason: format!("rotation norm {norm} is not 1"),
            });
        }
        Ok(Primitive {
            size,
            translation,
            rotation: canonical_quaternion(rotation),
            density,
        })
    }

    /// Axis-aligned cuboid without a density.
    pub fn cuboid(size: [f64; 3], translation: [f64; 3]) -> Result<Self> {
        Self::new(
            Vector3::from(size),
            Vector3::from(translation),
            UnitQuaternion::identity(),
            None,
        )
    }

    pub fn size(&self) -> &Vector3<f64> {
        &self.size
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn density(&self) -> Option<DensitySlot> {
        self.density
    }

    pub fn with_density(mut self, density: Option<DensitySlot>) -> Self {
        self.density = density;
        self
    }

    pub fn volume(&self) -> f64 {
        self.size.x * self.size.y * self.size.z
    }

    pub fn half_extents(&self) -> Vector3<f64> {
        self.size * 0.5
    }

    pub fn is_axis_aligned(&self) -> bool {
        self.rotation.angle() < 1e-12
    }

    /// The eight corners in the object frame, ordered by the bit pattern
    /// `(x, y, z)` of the corner sign (bit 0 = x).
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let h = self.half_extents();
        std::array::from_fn(|i| {
            let local = Vector3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            );
            self.translation + self.rotation * local
        })
    }

    /// Axis-aligned bounds `(min, max)` in the object frame.
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        if self.is_axis_aligned() {
            let h = self.half_extents();
            return (self.translation - h, self.translation + h);
        }
        let corners = self.corners();
        let mut lo = corners[0];
        let mut hi = corners[0];
        for c in &corners[1..] {
            lo = lo.inf(c);
            hi = hi.sup(c);
        }
        (lo, hi)
    }

    /// Whether `point` (object frame) lies inside the closed cuboid.
    pub fn contains(&self, point: &Vector3<f64>) -> bool {
        let local = self.rotation.inverse_transform_vector(&(point - self.translation));
        let h = self.half_extents();
        local.x.abs() <= h.x && local.y.abs() <= h.y && local.z.abs() <= h.z
    }

    fn order_key(&self) -> [f64; 3] {
        [self.translation.z, self.translation.x, self.translation.y]
    }
}

/// Serialized form of a primitive. Arrays are `(x, y, z)` and `(w, x, y, z)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrimitiveRecord {
    pub size: [f64; 3],
    pub translation: [f64; 3],
    pub rotation: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_slot: Option<DensitySlot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<Material>,
}

impl TryFrom<PrimitiveRecord> for Primitive {
    type Error = Error;

    fn try_from(r: PrimitiveRecord) -> Result<Self> {
        Primitive::new(
            Vector3::from(r.size),
            Vector3::from(r.translation),
            quaternion_from_wxyz(r.rotation)?,
            r.density_slot,
        )
    }
}

impl From<Primitive> for PrimitiveRecord {
    fn from(p: Primitive) -> Self {
        PrimitiveRecord {
            size: p.size.into(),
            translation: p.translation.into(),
            rotation: quaternion_to_wxyz(&p.rotation),
            density_slot: p.density,
            material: None,
        }
    }
}

/// An ordered list of primitives (bottom to top) with optional material labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObjectRecord", into = "ObjectRecord")]
pub struct PrimitiveObject {
    primitives: Vec<Primitive>,
    materials: Option<Vec<Material>>,
}

fn compare_keys(a: &[f64; 3], b: &[f64; 3]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

impl PrimitiveObject {
    /// Validate and order primitives bottom-to-top by `(z, x, y)`.
    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        Self::with_materials(primitives, None)
    }

    pub fn with_materials(
        primitives: Vec<Primitive>,
        materials: Option<Vec<Material>>,
    ) -> Result<Self> {
        if primitives.is_empty() || primitives.len() > MAX_PRIMITIVES {
            return Err(Error::Validation {
                what: "object",
                reason: format!(
                    "{} primitives, expected 1..={MAX_PRIMITIVES}",
                    primitives.len()
                ),
            });
        }
        if let Some(m) = &materials {
            if m.len() != primitives.len() {
                return Err(Error::Validation {
                    what: "object",
                    reason: format!("{} materials for {} primitives", m.len(), primitives.len()),
                });
            }
        }
        let mut order: Vec<usize> = (0..primitives.len()).collect();
        order.sort_by(|&a, &b| compare_keys(&primitives[a].order_key(), &primitives[b].order_key()));
        let materials = materials.map(|m| order.iter().map(|&i| m[i]).collect());
        let primitives = order.iter().map(|&i| primitives[i].clone()).collect();
        Ok(PrimitiveObject {
            primitives,
            materials,
        })
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn materials(&self) -> Option<&[Material]> {
        self.materials.as_deref()
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Density slots, if every primitive has one.
    pub fn slots(&self) -> Option<Vec<DensitySlot>> {
        self.primitives.iter().map(Primitive::density).collect()
    }

    /// Same geometry with the given slots (one per primitive, in order).
    pub fn with_slots(&self, slots: &[DensitySlot]) -> Result<Self> {
        if slots.len() != self.primitives.len() {
            return Err(Error::domain(format!(
                "{} slots for {} primitives",
                slots.len(),
                self.primitives.len()
            )));
        }
        Ok(PrimitiveObject {
            primitives: self
                .primitives
                .iter()
                .zip(slots)
                .map(|(p, s)| p.clone().with_density(Some(*s)))
                .collect(),
            materials: self.materials.clone(),
        })
    }

    pub fn with_material_labels(mut self, materials: Option<Vec<Material>>) -> Result<Self> {
        if let Some(m) = &materials {
            if m.len() != self.primitives.len() {
                return Err(Error::domain("material count does not match primitives"));
            }
        }
        self.materials = materials;
        Ok(self)
    }

    /// Geometry only: densities and materials removed.
    pub fn geometry(&self) -> Self {
        PrimitiveObject {
            primitives: self
                .primitives
                .iter()
                .map(|p| p.clone().with_density(None))
                .collect(),
            materials: None,
        }
    }

    /// Axis-aligned bounds over all primitives.
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let (mut lo, mut hi) = self.primitives[0].bounds();
        for p in &self.primitives[1..] {
            let (a, b) = p.bounds();
            lo = lo.inf(&a);
            hi = hi.sup(&b);
        }
        (lo, hi)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("primitive objects always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            context: "primitive object".into(),
            source,
        })
    }
}

/// Order primitives bottom-to-top; ties on height are broken by `x`, then `y`.
pub fn canonical_order(primitives: Vec<Primitive>) -> Result<PrimitiveObject> {
    PrimitiveObject::new(primitives)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub primitives: Vec<PrimitiveRecord>,
}

impl TryFrom<ObjectRecord> for PrimitiveObject {
    type Error = Error;

    fn try_from(r: ObjectRecord) -> Result<Self> {
        let materials: Option<Vec<Material>> = r.primitives.iter().map(|p| p.material).collect();
        let any_material = r.primitives.iter().any(|p| p.material.is_some());
        if any_material && materials.is_none() {
            return Err(Error::Validation {
                what: "object",
                reason: "material labels must be given for all primitives or none".into(),
            });
        }
        let primitives = r
            .primitives
            .into_iter()
            .map(Primitive::try_from)
            .collect::<Result<Vec<_>>>()?;
        PrimitiveObject::with_materials(primitives, materials)
    }
}

impl From<PrimitiveObject> for ObjectRecord {
    fn from(o: PrimitiveObject) -> Self {
        let materials = o.materials;
        ObjectRecord {
            primitives: o
                .primitives
                .into_iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut r = PrimitiveRecord::from(p);
                    r.material = materials.as_ref().map(|m| m[i]);
                    r
                })
                .collect(),
        }
    }
}
