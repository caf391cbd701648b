//! Numerical invariant suite: nonnegativity of `η` and of the dynamic
//! trigger, first-execution orderings, the exponential performance bound and
//! monotonicity of `W = V + η`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CheckSpec, Fault};
use crate::plant::{EventSystem, Plant};
use crate::sim::{
    first_execution_time, nonnegativity_margins, performance_bound_check, simulate,
    w_max_increase, SimConfig, SimError, Trajectory,
};
use crate::stats::{FilterDecay, GeneratorKind, GeneratorSpec};
use crate::triggers::{EventGenerator, TriggerError};

pub const MIN_SAMPLES: usize = 1000;
pub const TRIGGER_TOL: f64 = 1e-8;
pub const BOUND_TOL: f64 = 1e-6;
pub const W_TOL: f64 = 1e-6;

/// Inputs of one failed assertion, enough to replay it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub check: String,
    pub generator: String,
    pub sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub x0: Vec<f64>,
    pub eta0: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub cases: usize,
    /// Smallest slack over all cases; negative when the check fails.
    pub margin: f64,
    pub witnesses: Vec<Witness>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.witnesses.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(CheckOutcome::passed)
    }

    pub fn witnesses(&self) -> impl Iterator<Item = &Witness> {
        self.outcomes.iter().flat_map(|o| o.witnesses.iter())
    }
}

/// Builds `spec`, applying `fault` to dynamic generators.
pub fn build_generator(
    spec: &GeneratorSpec,
    kappa: Option<f64>,
    fault: Option<Fault>,
) -> Result<EventGenerator, TriggerError> {
    let gen = spec.build(kappa)?;
    Ok(match (gen, fault) {
        (EventGenerator::Dynamic(d), Some(Fault::NegateTrigger)) => {
            d.with_negated_static_term().into()
        }
        (g, _) => g,
    })
}

fn witness(check: &str, spec: &GeneratorSpec, x0: &[f64], eta0: f64, detail: String) -> Witness {
    Witness {
        check: check.to_string(),
        generator: spec.label(),
        sigma: spec.sigma,
        theta: spec.theta,
        x0: x0.to_vec(),
        eta0,
        detail,
    }
}

fn accumulate(name: &str, results: Vec<(usize, f64, Vec<Witness>)>) -> CheckOutcome {
    let mut out = CheckOutcome {
        name: name.to_string(),
        cases: 0,
        margin: f64::INFINITY,
        witnesses: Vec::new(),
    };
    for (cases, margin, w) in results {
        out.cases += cases;
        out.margin = out.margin.min(margin);
        out.witnesses.extend(w);
    }
    out
}

/// Trajectory-level suite over `generators × initial`: sign invariants,
/// performance bound (skipped without a decay rate) and `W` monotonicity.
pub fn trajectory_checks(
    plant: &Plant,
    generators: &[GeneratorSpec],
    initial: &[Vec<f64>],
    sim: &SimConfig,
    fault: Option<Fault>,
) -> Vec<CheckOutcome> {
    let kappa = plant.kappa();
    let jobs: Vec<(&GeneratorSpec, &Vec<f64>)> = generators
        .iter()
        .flat_map(|g| initial.iter().map(move |x| (g, x)))
        .collect();
    let runs: Vec<(&GeneratorSpec, &Vec<f64>, Result<Trajectory, SimError>)> = jobs
        .par_iter()
        .map(|(g, x0)| {
            let traj = build_generator(g, kappa, fault)
                .map_err(SimError::from)
                .and_then(|gen| simulate(plant, &gen, x0, sim));
            (*g, *x0, traj)
        })
        .collect();

    let mut sign = Vec::new();
    let mut bound = Vec::new();
    let mut wmono = Vec::new();
    for (g, x0, traj) in runs {
        let traj = match traj {
            Ok(t) => t,
            Err(e) => {
                let w = witness("nonnegativity", g, x0, 0.0, format!("simulation failed: {e}"));
                sign.push((1, f64::NEG_INFINITY, vec![w]));
                continue;
            }
        };
        let nn = nonnegativity_margins(&traj);
        let eta_slack = nn.min_eta + nn.eta_tolerance();
        let trig_slack = nn.min_trigger + TRIGGER_TOL;
        let mut ws = Vec::new();
        if eta_slack < 0.0 || trig_slack < 0.0 {
            ws.push(witness(
                "nonnegativity",
                g,
                x0,
                0.0,
                format!("min eta {:e}, min trigger {:e}", nn.min_eta, nn.min_trigger),
            ));
        }
        if traj.len() < MIN_SAMPLES {
            ws.push(witness(
                "nonnegativity",
                g,
                x0,
                0.0,
                format!("only {} recorded samples", traj.len()),
            ));
        }
        sign.push((1, eta_slack.min(trig_slack), ws));

        if let Some(k) = kappa {
            if g.kind == GeneratorKind::Static || g.lambda.is_none() && g.beta.is_none() {
                let rep = performance_bound_check(&traj, g.sigma, k);
                let v0 = traj.v_values[0];
                let vw_slack = BOUND_TOL * v0 - rep.max_v_minus_w;
                let slack = (BOUND_TOL - rep.max_relative_violation).min(vw_slack);
                let ws = if slack < 0.0 {
                    vec![witness(
                        "performance-bound",
                        g,
                        x0,
                        0.0,
                        format!(
                            "relative violation {:e}, max V - W {:e}",
                            rep.max_relative_violation, rep.max_v_minus_w
                        ),
                    )]
                } else {
                    Vec::new()
                };
                bound.push((1, slack, ws));
            }
        }

        let inc = w_max_increase(&traj);
        let slack = W_TOL - inc;
        let ws = if slack < 0.0 {
            vec![witness("w-monotone", g, x0, 0.0, format!("W rose by {inc:e} W(0)"))]
        } else {
            Vec::new()
        };
        wmono.push((1, slack, ws));
    }
    let mut out = vec![accumulate("nonnegativity", sign)];
    if kappa.is_some() {
        out.push(accumulate("performance-bound", bound));
    }
    out.push(accumulate("w-monotone", wmono));
    out
}

/// Uniform state in `[-half, half]^dim`, redrawn while it is zero.
fn random_state(rng: &mut ChaCha8Rng, dim: usize, half: f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-half..=half)).collect();
        if x.iter().any(|v| *v != 0.0) {
            return x;
        }
    }
}

/// Uniform on `(0, 1]`.
fn random_eta(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.gen::<f64>()
}

/// `(x0, η0)` samples: `zero_eta` with `η0 = 0`, then `positive_eta` with `η0 ∈ (0, 1]`.
pub fn random_samples(
    seed: u64,
    dim: usize,
    half: f64,
    zero_eta: usize,
    positive_eta: usize,
) -> Vec<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(zero_eta + positive_eta);
    for _ in 0..zero_eta {
        out.push((random_state(&mut rng, dim, half), 0.0));
    }
    for _ in 0..positive_eta {
        let x = random_state(&mut rng, dim, half);
        out.push((x, random_eta(&mut rng)));
    }
    out
}

/// The static rule never fires later than a dynamic one started from the
/// same sample: `t_s ≤ t_d + 2·event_tol`.
pub fn ordering_check(
    plant: &Plant,
    sigmas: &[f64],
    thetas: &[f64],
    decay: &FilterDecay,
    samples: &[(Vec<f64>, f64)],
    sim: &SimConfig,
    fault: Option<Fault>,
) -> CheckOutcome {
    let kappa = plant.kappa();
    let tol = 2.0 * sim.event_tol;
    let cases: Vec<(f64, f64, &(Vec<f64>, f64))> = sigmas
        .iter()
        .flat_map(|&s| thetas.iter().map(move |&t| (s, t)))
        .flat_map(|(s, t)| samples.iter().map(move |p| (s, t, p)))
        .collect();
    let results = cases
        .par_iter()
        .map(|&(sigma, theta, (x0, eta0))| {
            let st = GeneratorSpec::static_(sigma);
            let dy = decay.dynamic(sigma, theta);
            let times = build_generator(&st, kappa, fault)
                .and_then(|s| Ok((s, build_generator(&dy, kappa, fault)?)))
                .map_err(SimError::from)
                .and_then(|(s, d)| {
                    let ts = first_execution_time(plant, &s, x0, *eta0, sim)?;
                    let td = first_execution_time(plant, &d, x0, *eta0, sim)?;
                    Ok((ts, td))
                });
            match times {
                Ok((ts, td)) => {
                    let slack = td.time + tol - ts.time;
                    let ws = if slack < 0.0 {
                        vec![witness(
                            "static-first",
                            &dy,
                            x0,
                            *eta0,
                            format!("static fires at {:e}, dynamic at {:e}", ts.time, td.time),
                        )]
                    } else {
                        Vec::new()
                    };
                    (1, slack, ws)
                }
                Err(e) => (
                    1,
                    f64::NEG_INFINITY,
                    vec![witness("static-first", &dy, x0, *eta0, format!("run failed: {e}"))],
                ),
            }
        })
        .collect();
    accumulate("static-first", results)
}

/// A smaller `θ` never fires earlier: `t(θ1) ≥ t(θ2) − 2·event_tol` for `θ1 < θ2`.
pub fn theta_order_check(
    plant: &Plant,
    sigmas: &[f64],
    pairs: &[(f64, f64)],
    decay: &FilterDecay,
    samples: &[(Vec<f64>, f64)],
    sim: &SimConfig,
    fault: Option<Fault>,
) -> CheckOutcome {
    let kappa = plant.kappa();
    let tol = 2.0 * sim.event_tol;
    let cases: Vec<(f64, (f64, f64), &(Vec<f64>, f64))> = sigmas
        .iter()
        .flat_map(|&s| pairs.iter().map(move |&p| (s, p)))
        .flat_map(|(s, p)| samples.iter().map(move |x| (s, p, x)))
        .collect();
    let results = cases
        .par_iter()
        .map(|&(sigma, (th1, th2), (x0, eta0))| {
            let g1 = decay.dynamic(sigma, th1);
            let g2 = decay.dynamic(sigma, th2);
            let times = build_generator(&g1, kappa, fault)
                .and_then(|a| Ok((a, build_generator(&g2, kappa, fault)?)))
                .map_err(SimError::from)
                .and_then(|(a, b)| {
                    Ok((
                        first_execution_time(plant, &a, x0, *eta0, sim)?,
                        first_execution_time(plant, &b, x0, *eta0, sim)?,
                    ))
                });
            match times {
                Ok((t1, t2)) => {
                    let slack = t1.time - t2.time + tol;
                    let ws = if slack < 0.0 {
                        vec![witness(
                            "theta-order",
                            &g1,
                            x0,
                            *eta0,
                            format!("theta {th1} fires at {:e}, theta {th2} at {:e}", t1.time, t2.time),
                        )]
                    } else {
                        Vec::new()
                    };
                    (1, slack, ws)
                }
                Err(e) => (
                    1,
                    f64::NEG_INFINITY,
                    vec![witness("theta-order", &g1, x0, *eta0, format!("run failed: {e}"))],
                ),
            }
        })
        .collect();
    accumulate("theta-order", results)
}

pub const THETA_PAIRS: [(f64, f64); 3] = [(0.0, 0.1), (0.1, 1.0), (1.0, 10.0)];

/// Runs the whole suite described by `spec` on `plant`.
pub fn run_checks(
    plant: &Plant,
    spec: &CheckSpec,
    initial: &[Vec<f64>],
    sim: &SimConfig,
) -> CheckReport {
    let mut traj_sim = *sim;
    traj_sim.horizon = spec.horizon;
    let decay = spec.decay();
    let mut generators = Vec::new();
    for &s in &spec.sigma {
        generators.push(GeneratorSpec::static_(s));
        generators.extend(spec.theta.iter().map(|&t| decay.dynamic(s, t)));
    }
    let mut outcomes = trajectory_checks(plant, &generators, initial, &traj_sim, spec.fault);

    let dim = plant.dim();
    let samples = random_samples(
        spec.seed,
        dim,
        spec.state_box,
        spec.ordering_states,
        spec.ordering_eta_states,
    );
    outcomes.push(ordering_check(
        plant,
        &spec.sigma,
        &spec.theta,
        &decay,
        &samples,
        sim,
        spec.fault,
    ));

    // independent stream for the pairs
    let pairs_samples = random_samples(spec.seed.wrapping_add(1), dim, spec.state_box, 0, spec.theta_pairs);
    outcomes.push(theta_order_check(
        plant,
        &spec.sigma,
        &THETA_PAIRS,
        &decay,
        &pairs_samples,
        sim,
        spec.fault,
    ));
    CheckReport { outcomes }
}
