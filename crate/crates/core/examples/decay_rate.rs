//! Decay rate of the benchmark plant: both routes to `κ`, the margin of
//! `Q − κP`, and the effect of pinning `κ` to a rounded value.

use etc_core::plant::{decay_rate_kappa, decay_rate_kappa_2x2, min_eigenvalue, LinearPlant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plant = LinearPlant::benchmark();
    let (p, q) = (plant.p(), plant.q());

    let chol = decay_rate_kappa(p, q)?;
    let closed = decay_rate_kappa_2x2(p, q)?;
    println!("A + BK      = {}", plant.a() + plant.b() * plant.k());
    println!("kappa       = {chol:.10} (Cholesky)");
    println!("kappa       = {closed:.10} (2x2 characteristic root)");
    println!("min eig(Q - kappa P) = {:.3e}", min_eigenvalue(&(q - p * chol)));

    // the rounded value is slightly conservative, so Q - 0.48 P stays PSD
    let rounded = plant.clone().with_kappa(0.48)?;
    println!(
        "pinned kappa = {} (computed {:.6}), min eig(Q - 0.48 P) = {:.3e}",
        rounded.kappa(),
        rounded.kappa_computed(),
        min_eigenvalue(&(q - p * 0.48))
    );
    match plant.with_kappa(0.6) {
        Ok(_) => println!("kappa = 0.6 accepted"),
        Err(e) => println!("kappa = 0.6 rejected: {e}"),
    }
    Ok(())
}
