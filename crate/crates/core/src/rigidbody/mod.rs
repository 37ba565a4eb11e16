//! Rigid-body simulation of a composite cuboid object.
//!
//! The whole object moves as one body. Blocks never separate, so a rollout
//! depends on the densities only through the total mass, the center of mass
//! and the inertia tensor.

mod mass;
mod sim;

pub use mass::{cuboid_inertia, mass_properties, parallel_axis, MassProperties};
pub use sim::{
    ray_hit, simulate, simulate_all, simulate_with_mass, BodyState, Impulse, Interaction, SimConfig,
    Simulator, FORCE_MAGNITUDE,
};
