//! Voxelize grid-aligned towers, fit cuboids back and score the fit.
//!
//! cargo run --release --example voxelize_and_fit

use physprim::shapefit::{fit_primitives, match_primitives, FitConfig};
use physprim::towergen::{sample_tower, TowerSpec};
use physprim::voxel::{read_binvox, voxelize, write_binvox};

fn main() -> physprim::Result<()> {
    let mut f1_sum = 0.0;
    let n = 20;
    for seed in 0..n {
        let tower = sample_tower(&TowerSpec::new(2 + (seed as usize % 4), seed).grid_aligned(32))?;
        let grid = voxelize(&tower, 32)?;
        let bytes = write_binvox(&grid);
        assert_eq!(read_binvox(&bytes)?, grid);
        let fitted = fit_primitives(&grid, &FitConfig::default())?;
        let m = match_primitives(&fitted, &tower);
        f1_sum += m.f1();
        println!(
            "seed {seed:2}: {} blocks, {:5} cells, {:5} binvox bytes, fitted {} (F1 {:.2})",
            tower.len(),
            grid.occupied_count(),
            bytes.len(),
            fitted.len(),
            m.f1()
        );
    }
    println!("mean F1 {:.3}", f1_sum / n as f64);
    Ok(())
}
