//! Push a tower from the four canonical positions and summarize the motion.
//!
//! cargo run --release --example simulate_interactions

use physprim::model::DensitySlot;
use physprim::rigidbody::{mass_properties, simulate_all, Interaction, SimConfig};
use physprim::towergen::{sample_tower, TowerSpec};

fn main() -> physprim::Result<()> {
    let slots = [DensitySlot::new(80)?, DensitySlot::new(5)?, DensitySlot::new(25)?];
    let tower = sample_tower(&TowerSpec::new(3, 9))?.with_slots(&slots)?;
    let sim = SimConfig::default();
    let mp = mass_properties(&tower)?;
    println!("mass {:.3} kg, COM {:.4?}", mp.mass, mp.center_of_mass.as_slice());
    println!("principal moments {:.5?}", mp.principal_moments().as_slice());

    for (traj, interaction) in simulate_all(&tower, &sim)?.iter().zip(Interaction::all()) {
        let last = traj.poses().last().unwrap();
        let impulse = interaction.impulse(&tower, &mp, &sim);
        println!(
            "push {} from {:?}: hit {:.3?}, final position {:.3?}, rotated {:.1} deg",
            interaction.id,
            interaction.source.as_slice(),
            impulse.point.as_slice(),
            last.position.as_slice(),
            last.orientation().angle().to_degrees()
        );
    }
    println!("{}", simulate_all(&tower, &sim)?[0].to_csv().lines().take(3).collect::<Vec<_>>().join("\n"));
    Ok(())
}
