//! Comparison functions: evaluation, composition and the sampled class-K∞ check.

use etc_core::kinf::{check_kinf, KInfFunction};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid: Vec<f64> = (0..=100).map(|i| 0.1 * i as f64).collect();
    let funcs = [
        KInfFunction::linear(2.0),
        KInfFunction::power(0.5, 3.0),
        KInfFunction::sum(KInfFunction::power(2.0, 4.0), KInfFunction::power(1.0, 2.0)),
    ];
    for f in &funcs {
        println!("{f:?}");
        println!("  f(0) = {}, f(1) = {}, f(2) = {}", f.eval(0.0)?, f.eval(1.0)?, f.eval(2.0)?);
        println!("  {}", check_kinf(f, &grid)?);
    }
    println!("f(-1): {}", funcs[0].eval(-1.0).unwrap_err());
    println!("power with p < 1: {}", KInfFunction::power(1.0, 0.5).validate().unwrap_err());
    let as_toml = toml::to_string(&funcs[2])?;
    println!("serialized:\n{as_toml}");
    Ok(())
}
