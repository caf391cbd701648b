//! The invariant suite on the benchmark plant, then again with the static
//! term of the dynamic rule negated to show what a failure looks like.

use etc_core::checks::run_checks;
use etc_core::config::{CheckSpec, Fault};
use etc_core::plant::{LinearPlant, Plant};
use etc_core::sim::SimConfig;
use etc_core::stats::circle_initial_conditions;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plant: Plant = LinearPlant::benchmark().with_kappa(0.48)?.into();
    let initial = circle_initial_conditions(10.0, 6, 2)?;
    let sim = SimConfig::default();

    for fault in [None, Some(Fault::NegateTrigger)] {
        let spec = CheckSpec {
            fault,
            ..CheckSpec::default()
        };
        println!("fault: {fault:?}");
        let report = run_checks(&plant, &spec, &initial, &sim);
        for o in &report.outcomes {
            let status = if o.passed() { "pass" } else { "FAIL" };
            println!("  {status} {:<18} {:>5} cases  margin {:+.2e}", o.name, o.cases, o.margin);
            if let Some(w) = o.witnesses.first() {
                println!("       e.g. {} x0 {:?}: {}", w.generator, w.x0, w.detail);
            }
        }
    }
    Ok(())
}
