//! Sample block towers, assign densities and write a small dataset.
//!
//! cargo run --release --example generate_towers -- [out_dir]

use physprim::pipeline::{cmd_gen, Dataset, ExperimentConfig};
use physprim::towergen::{assign_densities, sample_tower, TowerSpec};

fn main() -> physprim::Result<()> {
    let tower = sample_tower(&TowerSpec::new(4, 42))?;
    println!("tower with {} blocks:", tower.len());
    for p in tower.primitives() {
        println!("  size {:.3?} at {:.3?}", p.size().as_slice(), p.translation().as_slice());
    }
    for (i, config) in assign_densities(&tower, 3, 42)?.iter().enumerate() {
        let slots: Vec<u32> = config.slots().unwrap().iter().map(|s| s.get()).collect();
        println!("  config {i}: materials {:?} slots {slots:?}", config.materials().unwrap());
    }

    let out = std::env::args().nth(1).unwrap_or_else(|| "target/example-dataset".into());
    let mut cfg = ExperimentConfig::default();
    cfg.tower.count = 5;
    let manifest = cmd_gen(&cfg, out.as_ref())?;
    let dataset = Dataset::load(out.as_ref())?;
    println!(
        "{} records, {} trajectory files in {out}; first record {}",
        manifest.records,
        manifest.trajectory_files,
        dataset.records[0].id
    );
    Ok(())
}
