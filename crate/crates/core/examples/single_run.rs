//! One run from `x0 = (10, 0)` per generator: event count, inter-execution
//! times and final `V`. Pass a directory to also write the CSVs.
//!
//! ```text
//! cargo run --release --example single_run -- out/single
//! ```

use etc_core::export::write_trajectory;
use etc_core::plant::LinearPlant;
use etc_core::sim::{simulate, SimConfig};
use etc_core::stats::GeneratorSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1);
    let plant = LinearPlant::benchmark().with_kappa(0.48)?;
    let config = SimConfig::default();
    let x0 = [10.0, 0.0];

    for spec in [
        GeneratorSpec::static_(0.001),
        GeneratorSpec::dynamic(0.001, 0.0),
        GeneratorSpec::dynamic(0.001, 1.0),
        GeneratorSpec::dynamic(0.1, 1.0),
    ] {
        let gen = spec.build(Some(plant.kappa()))?;
        let traj = simulate(&plant, &gen, &x0, &config)?;
        let gaps = traj.inter_execution_times();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let min = gaps.iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "{:<28} events {:>5}  mean {:.4} s  min {:.2e} s  V(10) {:.2e}",
            spec.label(),
            gaps.len(),
            mean,
            min,
            traj.v_values.last().unwrap()
        );
        if let Some(dir) = &out {
            write_trajectory(dir.as_ref(), &spec.label(), &traj)?;
        }
    }
    Ok(())
}
