//! Simulate a push, render the top block's corners through a pinhole
//! camera with a few occluded frames, and recover the trajectory.
//!
//! cargo run --release --example extract_trajectory

use nalgebra::{Isometry3, Matrix3, Rotation3, UnitQuaternion, Vector3};
use physprim::infer::{trajectory_distance, DistanceMode};
use physprim::model::DensitySlot;
use physprim::rigidbody::{simulate_all, SimConfig};
use physprim::towergen::{sample_tower, TowerSpec};
use physprim::trajextract::{extract_trajectory, CameraIntrinsics, ExtractOptions, KeypointFrame};

fn main() -> physprim::Result<()> {
    let slots = [DensitySlot::new(30)?, DensitySlot::new(60)?];
    let tower = sample_tower(&TowerSpec::new(2, 5))?.with_slots(&slots)?;
    let truth = simulate_all(&tower, &SimConfig::default())?.remove(1);
    let model = tower.primitives()[1].corners().to_vec();

    let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0)?;
    // Camera 5 m behind the tower looking along +y, image y pointing down.
    let look = Rotation3::from_matrix_unchecked(Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0));
    let camera = Isometry3::from_parts(Vector3::new(0.0, 0.0, 5.0).into(), UnitQuaternion::from_rotation_matrix(&look));
    let frames: Vec<KeypointFrame> = truth
        .poses()
        .iter()
        .enumerate()
        .map(|(f, pose)| {
            let points = model
                .iter()
                .map(|p| k.project(&(camera * pose.isometry()).transform_point(&(*p).into()).coords).expect("in front of the camera"))
                .collect();
            let mut frame = KeypointFrame::new(f, points);
            if (100..105).contains(&f) {
                frame.visible = vec![false; model.len()];
                frame.visible[0] = true;
            }
            frame
        })
        .collect();

    let options = ExtractOptions {
        world_to_camera: camera,
        interaction_id: 1,
        ..ExtractOptions::default()
    };
    let extraction = extract_trajectory(&frames, &model, &k, &options)?;
    let gaps = extraction.gaps().iter().filter(|&&g| g).count();
    let mae = trajectory_distance(&extraction.trajectory, &truth, DistanceMode::Mae)?;
    println!("{} poses, {gaps} interpolated, MAE against simulation {mae:.3e}", extraction.trajectory.len());
    Ok(())
}
