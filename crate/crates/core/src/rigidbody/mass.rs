use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::model::{Primitive, PrimitiveObject};

/// Aggregate mass properties of a composite object, in the object frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassProperties {
    pub mass: f64,
    pub center_of_mass: Vector3<f64>,
    /// Inertia tensor about the center of mass.
    pub inertia: Matrix3<f64>,
}

impl MassProperties {
    /// Principal moments, ascending.
    pub fn principal_moments(&self) -> Vector3<f64> {
        let mut m: Vec<f64> = SymmetricEigen::new(self.inertia).eigenvalues.iter().copied().collect();
        m.sort_by(f64::total_cmp);
        Vector3::new(m[0], m[1], m[2])
    }

    /// Positive mass, symmetric positive-definite inertia whose principal
    /// moments satisfy the triangle inequality.
    pub fn is_physical(&self) -> bool {
        let sym = (self.inertia - self.inertia.transpose()).norm() <= 1e-12 * self.inertia.norm();
        let p = self.principal_moments();
        let tol = 1e-12 * p.z.abs();
        self.mass > 0.0 && sym && p.x > 0.0 && p.z <= p.x + p.y + tol
    }
}

/// Inertia tensor of a solid cuboid about its own center, in the object frame.
pub fn cuboid_inertia(mass: f64, primitive: &Primitive) -> Matrix3<f64> {
    scaled_inertia(mass, primitive) / 12.0
}

/// Twelve times the cuboid inertia.
fn scaled_inertia(mass: f64, primitive: &Primitive) -> Matrix3<f64> {
    let s = primitive.size();
    let (x2, y2, z2) = (s.x * s.x, s.y * s.y, s.z * s.z);
    let local = Matrix3::from_diagonal(&Vector3::new(y2 + z2, x2 + z2, x2 + y2)) * mass;
    if primitive.is_axis_aligned() {
        return local;
    }
    let r = primitive.rotation().to_rotation_matrix().into_inner();
    r * local * r.transpose()
}

/// Shift an inertia tensor from the body's center of mass to a point at
/// offset `d` from it.
pub fn parallel_axis(mass: f64, d: &Vector3<f64>) -> Matrix3<f64> {
    (Matrix3::identity() * d.norm_squared() - d * d.transpose()) * mass
}

/// Total mass, center of mass and inertia about the center of mass.
///
/// Moments are accumulated about the object origin and shifted once at the
/// end, with the 1/12 factor applied last. For grid-aligned geometry every
/// accumulated term is exact in binary floating point, so assignments with
/// equal moments give bitwise-equal results.
pub fn mass_properties(object: &PrimitiveObject) -> Result<MassProperties> {
    let parts: Vec<(f64, &Primitive)> = object
        .primitives()
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let slot = p
                .density()
                .ok_or_else(|| Error::domain(format!("primitive {k} has no density")))?;
            let volume = p.volume();
            if volume <= 0.0 {
                return Err(Error::domain(format!("primitive {k} has zero volume")));
            }
            Ok((slot.density() * volume, p))
        })
        .collect::<Result<_>>()?;

    let mut mass = 0.0;
    let mut first = Vector3::zeros();
    let mut own = Matrix3::zeros();
    let mut origin = Matrix3::zeros();
    for (m, p) in &parts {
        mass += m;
        first += p.translation() * *m;
        own += scaled_inertia(*m, p);
        origin += parallel_axis(*m, p.translation());
    }
    let center_of_mass = first / mass;
    let inertia = own / 12.0 + origin - parallel_axis(mass, &center_of_mass);
    Ok(MassProperties {
        mass,
        center_of_mass,
        inertia: (inertia + inertia.transpose()) * 0.5,
    })
}
