//! Density assignments that no trajectory can tell apart.
//!
//! Four equal blocks stacked exactly on top of each other: changing the
//! slots by a multiple of (1, -3, 3, -1) keeps mass, center of mass and
//! inertia, so every push gives the same trajectory.
//!
//! cargo run --release --example degeneracy

use physprim::infer::{trajectory_distance, DistanceMode};
use physprim::model::{DensitySlot, Primitive, PrimitiveObject};
use physprim::rigidbody::{mass_properties, simulate_all, SimConfig};

fn stack(slots: &[u32]) -> physprim::Result<PrimitiveObject> {
    let prims = slots
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            Ok(Primitive::cuboid([0.25, 0.25, 0.25], [0.0, 0.0, -0.375 + 0.25 * i as f64])?
                .with_density(Some(DensitySlot::new(s)?)))
        })
        .collect::<physprim::Result<Vec<_>>>()?;
    PrimitiveObject::new(prims)
}

fn main() -> physprim::Result<()> {
    let sim = SimConfig::default();
    let a = stack(&[10, 20, 20, 10])?;
    let b = stack(&[11, 17, 23, 9])?;
    let (ma, mb) = (mass_properties(&a)?, mass_properties(&b)?);
    println!("mass {} vs {}", ma.mass, mb.mass);
    println!("COM {:?} vs {:?}", ma.center_of_mass.as_slice(), mb.center_of_mass.as_slice());
    for (ta, tb) in simulate_all(&a, &sim)?.iter().zip(&simulate_all(&b, &sim)?) {
        println!("interaction {}: MAE {:e}", ta.interaction_id(), trajectory_distance(ta, tb, DistanceMode::Mae)?);
    }

    // Swapping the densities of two side-by-side blocks moves the center of
    // mass, so those trajectories differ.
    let pair = |l: u32, r: u32| -> physprim::Result<PrimitiveObject> {
        PrimitiveObject::new(vec![
            Primitive::cuboid([0.25, 0.25, 0.25], [-0.125, 0.0, -0.375])?.with_density(Some(DensitySlot::new(l)?)),
            Primitive::cuboid([0.25, 0.25, 0.25], [0.125, 0.0, -0.375])?.with_density(Some(DensitySlot::new(r)?)),
        ])
    };
    let (l, r) = (simulate_all(&pair(10, 40)?, &sim)?, simulate_all(&pair(40, 10)?, &sim)?);
    println!("side-by-side swap, interaction 0: MAE {:e}", trajectory_distance(&l[0], &r[0], DistanceMode::Mae)?);
    Ok(())
}
