//! Best trajectory distance against sample budget, with the fitted shape
//! and with jittered shapes.
//!
//! cargo run --release --example budget_sweep -- [tasks]

use physprim::pipeline::{cmd_sweep, ExperimentConfig};

fn main() -> physprim::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.infer.sweep_tasks = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let report = cmd_sweep(&cfg)?;
    println!("{} tasks, {:?} distance", report.tasks, report.distance);
    print!("{}", report.to_text());
    Ok(())
}
