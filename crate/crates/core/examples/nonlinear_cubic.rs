//! Scalar plant `ẋ = x³ − (x+e)³ − gain·(x+e)` with `V = x²`: check the
//! dissipation inequality on a grid, then compare static and dynamic rules
//! with a general `β`.

use etc_core::kinf::KInfFunction;
use etc_core::plant::NonlinearProblem;
use etc_core::sim::{simulate, SimConfig};
use etc_core::triggers::{DynamicGenerator, EventGenerator, StaticGenerator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = NonlinearProblem::cubic(1.0)?;
    let grid: Vec<Vec<f64>> = (-20..=20).map(|i| vec![0.1 * i as f64]).collect();
    let report = problem.validate_on(&grid, &grid, 1e-6)?;
    println!(
        "dissipation: max excess {:.2e}, {} violations, V positive definite: {}",
        report.max_dissipation_excess,
        report.violations.len(),
        report.positive_definite
    );

    let config = SimConfig {
        horizon: 5.0,
        ..SimConfig::default()
    };
    let gens: [(&str, EventGenerator); 2] = [
        ("static", StaticGenerator::new(0.5)?.into()),
        (
            "dynamic",
            DynamicGenerator::with_beta(0.5, 1.0, KInfFunction::linear(1.0))?.into(),
        ),
    ];
    for (name, gen) in gens {
        let traj = simulate(&problem, &gen, &[2.0], &config)?;
        let gaps = traj.inter_execution_times();
        println!(
            "{name:<8} events {:>4}  mean gap {:.4} s  x(5) {:.3e}  status {}",
            gaps.len(),
            gaps.iter().sum::<f64>() / gaps.len().max(1) as f64,
            traj.final_state().unwrap()[0],
            traj.status.as_str()
        );
    }
    Ok(())
}
