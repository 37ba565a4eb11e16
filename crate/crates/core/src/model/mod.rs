//! Domain types shared by every stage: density slots, materials, cuboid
//! primitives, poses, trajectories and density priors.

mod density;
mod primitive;
mod prior;
mod trajectory;

pub use density::{material_slots, slot_density, DensitySlot, Material, NUM_SLOTS, SLOT_UNIT};
pub use primitive::{
    canonical_order, canonical_quaternion, quaternion_from_wxyz, quaternion_to_wxyz, ObjectRecord,
    Primitive, PrimitiveObject, PrimitiveRecord, MAX_PRIMITIVES, MAX_SIZE, SIZE_SCALE,
    TRANSLATION_SCALE, UNIT_TOLERANCE,
};
pub use prior::DensityPrior;
pub use trajectory::{
    format_significant, Pose, Trajectory, CSV_HEADER, NUM_INTERACTIONS, TIME_STEP, TRAJECTORY_LEN,
};
