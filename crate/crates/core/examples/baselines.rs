//! Frequent, oracle and random density guesses on generated towers.
//!
//! cargo run --release --example baselines

use physprim::metrics::{baseline_frequent, density_rmse, oracle_guess, random_guess};
use physprim::rng::seeded;
use physprim::towergen::draw_materials;

fn main() -> physprim::Result<()> {
    let mut rng = seeded(1, 0);
    let (train_m, train_s) = draw_materials(2000, &mut rng);
    let (test_m, truth) = draw_materials(2000, &mut rng);
    drop(train_m);
    let mode = baseline_frequent(train_s.iter().copied())?;
    let frequent = vec![mode; truth.len()];
    let oracle: Vec<_> = test_m.iter().map(|&m| oracle_guess(m, &mut rng)).collect();
    let random: Vec<_> = truth.iter().map(|_| random_guess(&mut rng)).collect();
    println!("most frequent training slot: {mode}");
    println!("RMSE frequent {:.2}", density_rmse(&frequent, &truth)?);
    println!("RMSE oracle   {:.2}", density_rmse(&oracle, &truth)?);
    println!("RMSE random   {:.2} (closed form {:.2})", density_rmse(&random, &truth)?, (9999.0f64 / 6.0).sqrt());
    Ok(())
}
