//! `V` and `W = V + η` along one run per generator (σ = 0.001): the static
//! rule keeps `W = V`, `θ = 0` lets `V` rise, `θ = 1` is nearly monotone.
//!
//! ```text
//! cargo run --release --example lyapunov_series [-- out/figure]
//! ```

use etc_core::export::write_trajectory;
use etc_core::plant::LinearPlant;
use etc_core::sim::{excess_total_variation, max_single_rise, SimConfig};
use etc_core::stats::{figure_generators, figure_series};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plant = LinearPlant::benchmark().with_kappa(0.48)?;
    let series = figure_series(
        &plant,
        Some(plant.kappa()),
        &figure_generators(0.001),
        &[10.0, 0.0],
        &SimConfig::default(),
    )?;
    for s in &series {
        let v0 = s.v()[0];
        let gap = s.w().iter().zip(s.v()).map(|(w, v)| w - v).fold(0.0, f64::max);
        println!(
            "{:<28} max(W - V) {:.2e}  largest V rise {:>6.2}% V(0)  excess TV {:>6.2}% V(0)",
            s.spec.label(),
            gap,
            100.0 * max_single_rise(s.v()) / v0,
            100.0 * excess_total_variation(s.v()) / v0
        );
        if let Some(dir) = std::env::args().nth(1) {
            write_trajectory(dir.as_ref(), &format!("figure_{}", s.spec.label()), &s.trajectory)?;
        }
    }
    Ok(())
}
