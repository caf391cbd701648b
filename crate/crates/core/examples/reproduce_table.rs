//! Inter-execution statistics over the full generator grid, 30 initial
//! conditions on the radius-10 circle, 10 s each.
//!
//! ```text
//! cargo run --release --example reproduce_table [-- table.csv]
//! ```

use etc_core::export::table_csv;
use etc_core::plant::LinearPlant;
use etc_core::stats::{run_table_with, BatchSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plant = LinearPlant::benchmark().with_kappa(0.48)?;
    let mut batch = BatchSpec::reference(plant);
    batch.monitor = false;

    println!("{:<10} {:>7} {:>6} {:>9} {:>9}", "generator", "sigma", "theta", "mean", "cv");
    let rows = run_table_with(&batch, |_, row| {
        let theta = row.spec.theta.map_or("-".to_string(), |t| t.to_string());
        match &row.stats {
            Ok(s) => println!(
                "{:<10} {:>7} {:>6} {:>9.4} {:>9.4}",
                row.spec.kind.as_str(),
                row.spec.sigma,
                theta,
                s.mean,
                s.cv
            ),
            Err(e) => println!("{} failed: {e}", row.spec.label()),
        }
    });
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, table_csv(&rows))?;
        println!("wrote {path}");
    }
    Ok(())
}
