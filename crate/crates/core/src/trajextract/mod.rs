//! Pose trajectories from tracked 2D keypoints.
//!
//! Keypoints are matched between frames by optimal assignment and each
//! frame's pose is solved by Levenberg-Marquardt on the reprojection error.
//! The camera convention is `X_c = R X + t` with pixel coordinates
//! `u = fx x / z + cx`, `v = fy y / z + cy`.

mod extract;
mod matching;
mod pnp;

pub use extract::{
    extract_trajectory, read_keypoints_csv, write_keypoints_csv, ExtractOptions, Extraction, FrameStatus,
    KeypointFrame,
};
pub use matching::{assignment_cost, distance_matrix, hungarian, match_points};
pub use pnp::{axis_rotations, initial_guess, project, solve_pnp_lm, solve_pnp_multistart, CameraIntrinsics, LmConfig, PnpSolution};
