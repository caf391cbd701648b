//! Batch experiments: initial conditions on a circle, pooled inter-execution
//! statistics, parameter-grid tables and dense `V`/`W` series for plotting.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinf::KInfFunction;
use crate::plant::{EventSystem, LinearPlant, Plant};
use crate::sim::{
    nonnegativity_margins, performance_bound_check, simulate, simulate_events, w_max_increase,
    RunStatus, SimConfig, SimError, Trajectory,
};
use crate::triggers::{DynamicGenerator, EventGenerator, StaticGenerator, TriggerError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no inter-execution intervals to pool")]
    EmptyPool,
    #[error("circle initial conditions need radius > 0 and count >= 1 (got {radius}, {count})")]
    Circle { radius: f64, count: usize },
    #[error("circle initial conditions are only defined for 2 states, system has {0}")]
    UnsupportedDimension(usize),
    #[error(transparent)]
    Trigger(#[from] TriggerError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// `[r·cos(2πi/N), r·sin(2πi/N)]` for `i = 1..N`.
pub fn circle_initial_conditions(
    radius: f64,
    count: usize,
    dim: usize,
) -> Result<Vec<Vec<f64>>, StatsError> {
    if dim != 2 {
        return Err(StatsError::UnsupportedDimension(dim));
    }
    if !(radius > 0.0 && radius.is_finite()) || count == 0 {
        return Err(StatsError::Circle { radius, count });
    }
    Ok((1..=count)
        .map(|i| {
            let a = 2.0 * PI / count as f64 * i as f64;
            vec![radius * a.cos(), radius * a.sin()]
        })
        .collect())
}

/// Pooled inter-execution statistics. `sd` uses the population formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub mean: f64,
    pub sd: f64,
    pub cv: f64,
    pub count: usize,
    /// Observed minimal inter-execution time.
    pub min: f64,
}

/// Pools `t_{i+1} − t_i` over all trajectories' execution sequences.
///
/// The interval truncated by the horizon is never part of an execution
/// sequence, so it is excluded. Sequences with fewer than two executions
/// contribute nothing.
pub fn inter_execution_stats<'a, I>(execution_sequences: I) -> Result<RunStats, StatsError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut min = f64::INFINITY;
    let mut pooled = Vec::new();
    for seq in execution_sequences {
        for w in seq.windows(2) {
            let d = w[1] - w[0];
            sum += d;
            count += 1;
            min = min.min(d);
            pooled.push(d);
        }
    }
    if count == 0 {
        return Err(StatsError::EmptyPool);
    }
    let mean = sum / count as f64;
    let var = pooled.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / count as f64;
    let sd = var.sqrt();
    Ok(RunStats {
        mean,
        sd,
        cv: if mean > 0.0 { sd / mean } else { f64::NAN },
        count,
        min,
    })
}

/// Convenience wrapper over whole trajectories.
pub fn trajectory_stats(trajectories: &[Trajectory]) -> Result<RunStats, StatsError> {
    inter_execution_stats(trajectories.iter().map(|t| t.execution_times.as_slice()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Static,
    Dynamic,
}

impl GeneratorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GeneratorKind::Static => "static",
            GeneratorKind::Dynamic => "dynamic",
        }
    }
}

/// Declarative generator parameters; `lambda` defaults to `(1−σ)κ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(rename = "type")]
    pub kind: GeneratorKind,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<KInfFunction>,
}

impl GeneratorSpec {
    pub fn static_(sigma: f64) -> Self {
        Self {
            kind: GeneratorKind::Static,
            sigma,
            theta: None,
            lambda: None,
            beta: None,
        }
    }

    pub fn dynamic(sigma: f64, theta: f64) -> Self {
        Self {
            kind: GeneratorKind::Dynamic,
            sigma,
            theta: Some(theta),
            lambda: None,
            beta: None,
        }
    }

    /// Builds the generator; `kappa` resolves the default `λ = (1−σ)κ`.
    pub fn build(&self, kappa: Option<f64>) -> Result<EventGenerator, TriggerError> {
        Ok(match self.kind {
            GeneratorKind::Static => StaticGenerator::new(self.sigma)?.into(),
            GeneratorKind::Dynamic => {
                let theta = self.theta.unwrap_or(0.0);
                match (&self.beta, self.lambda) {
                    (Some(beta), _) => {
                        DynamicGenerator::with_beta(self.sigma, theta, beta.clone())?.into()
                    }
                    (None, Some(lambda)) => {
                        DynamicGenerator::linear(self.sigma, theta, lambda)?.into()
                    }
                    (None, None) => {
                        let kappa = kappa.ok_or(TriggerError::MissingDecay)?;
                        DynamicGenerator::with_matched_lambda(self.sigma, theta, kappa)?.into()
                    }
                }
            }
        })
    }

    /// `λ` in effect for a linear filter.
    pub fn effective_lambda(&self, kappa: Option<f64>) -> Option<f64> {
        match self.kind {
            GeneratorKind::Static => None,
            GeneratorKind::Dynamic if self.beta.is_some() => None,
            GeneratorKind::Dynamic => self
                .lambda
                .or_else(|| kappa.map(|k| (1.0 - self.sigma) * k)),
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            GeneratorKind::Static => format!("static_sigma{}", self.sigma),
            GeneratorKind::Dynamic => format!(
                "dynamic_sigma{}_theta{}",
                self.sigma,
                self.theta.unwrap_or(0.0)
            ),
        }
    }
}

/// Filter decay shared by the dynamic entries of a sweep; both unset means
/// `λ = (1−σ)κ`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterDecay {
    pub lambda: Option<f64>,
    pub beta: Option<KInfFunction>,
}

impl FilterDecay {
    pub fn dynamic(&self, sigma: f64, theta: f64) -> GeneratorSpec {
        GeneratorSpec {
            lambda: self.lambda,
            beta: self.beta.clone(),
            ..GeneratorSpec::dynamic(sigma, theta)
        }
    }
}

/// The reference parameter grid: `σ ∈ {0.001, 0.01, 0.1}`, static plus
/// dynamic with `θ ∈ {0, 0.01, 0.1, 1, 10, 100}` and matched `λ`.
pub fn reference_grid() -> Vec<GeneratorSpec> {
    let mut out = Vec::new();
    for sigma in [0.001, 0.01, 0.1] {
        out.push(GeneratorSpec::static_(sigma));
        for theta in [0.0, 0.01, 0.1, 1.0, 10.0, 100.0] {
            out.push(GeneratorSpec::dynamic(sigma, theta));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct BatchSpec {
    pub plant: Plant,
    pub generators: Vec<GeneratorSpec>,
    pub initial_conditions: Vec<Vec<f64>>,
    pub sim: SimConfig,
    /// Record monitors and evaluate invariants for every run (slower, more memory per run).
    pub monitor: bool,
}

impl BatchSpec {
    /// The reference experiment: 30 initial conditions on a radius-10 circle,
    /// 10 s frame, full grid.
    pub fn reference(plant: LinearPlant) -> Self {
        Self {
            plant: plant.into(),
            generators: reference_grid(),
            initial_conditions: circle_initial_conditions(10.0, 30, 2).expect("valid circle"),
            sim: SimConfig::default(),
            monitor: true,
        }
    }
}

/// Worst-case invariant margins over all runs of a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMonitors {
    /// Minimum of `η / (1 + max η)` over runs.
    pub min_eta_scaled: f64,
    pub min_trigger: f64,
    pub max_w_increase: f64,
    /// Relative excess over `V(0)e^{(σ−1)κt}`; NaN without a decay rate.
    pub max_bound_violation: f64,
    pub max_v_minus_w: f64,
    pub min_samples: usize,
    /// Largest `V(T)/V(0)` over runs.
    pub max_final_v_ratio: f64,
}

impl CellMonitors {
    fn empty() -> Self {
        Self {
            min_eta_scaled: f64::INFINITY,
            min_trigger: f64::INFINITY,
            max_w_increase: f64::NEG_INFINITY,
            max_bound_violation: f64::NEG_INFINITY,
            max_v_minus_w: f64::NEG_INFINITY,
            min_samples: usize::MAX,
            max_final_v_ratio: f64::NEG_INFINITY,
        }
    }

    fn absorb(&mut self, other: &CellMonitors) {
        self.min_eta_scaled = self.min_eta_scaled.min(other.min_eta_scaled);
        self.min_trigger = self.min_trigger.min(other.min_trigger);
        self.max_w_increase = self.max_w_increase.max(other.max_w_increase);
        self.max_bound_violation = self.max_bound_violation.max(other.max_bound_violation);
        self.max_v_minus_w = self.max_v_minus_w.max(other.max_v_minus_w);
        self.min_samples = self.min_samples.min(other.min_samples);
        self.max_final_v_ratio = self.max_final_v_ratio.max(other.max_final_v_ratio);
    }

    fn of(traj: &Trajectory, sigma: f64, kappa: Option<f64>) -> Self {
        let nn = nonnegativity_margins(traj);
        let perf = kappa.map(|k| performance_bound_check(traj, sigma, k));
        let v0 = traj.v_values.first().copied().unwrap_or(0.0);
        let vt = traj.v_values.last().copied().unwrap_or(0.0);
        Self {
            min_eta_scaled: nn.min_eta / (1.0 + nn.max_eta.abs()),
            min_trigger: nn.min_trigger,
            max_w_increase: w_max_increase(traj),
            max_bound_violation: perf.map_or(f64::NAN, |p| p.max_relative_violation),
            max_v_minus_w: perf.map_or(f64::NAN, |p| p.max_v_minus_w),
            min_samples: traj.len(),
            max_final_v_ratio: if v0 > 0.0 { vt / v0 } else { 0.0 },
        }
    }
}

/// One row of a table run.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub spec: GeneratorSpec,
    pub lambda: Option<f64>,
    /// Statistics, or the error annotation that replaced them.
    pub stats: Result<RunStats, String>,
    pub monitors: Option<CellMonitors>,
    pub statuses: Vec<RunStatus>,
}

/// Runs every initial condition of one generator record. Initial conditions
/// fan out over the current rayon pool; results come back in input order.
pub fn run_cell(spec: &BatchSpec, gen_spec: &GeneratorSpec) -> CellResult {
    let kappa = spec.plant.kappa();
    let lambda = gen_spec.effective_lambda(kappa);
    let gen = match gen_spec.build(kappa) {
        Ok(g) => g,
        Err(e) => {
            return CellResult {
                spec: gen_spec.clone(),
                lambda,
                stats: Err(e.to_string()),
                monitors: None,
                statuses: Vec::new(),
            }
        }
    };
    let runs: Vec<Result<(Vec<f64>, RunStatus, Option<CellMonitors>), SimError>> = spec
        .initial_conditions
        .par_iter()
        .map(|x0| {
            if spec.monitor {
                let traj = simulate(&spec.plant, &gen, x0, &spec.sim)?;
                let m = CellMonitors::of(&traj, gen.sigma(), kappa);
                Ok((traj.execution_times, traj.status, Some(m)))
            } else {
                let traj = simulate_events(&spec.plant, &gen, x0, &spec.sim)?;
                Ok((traj.execution_times, traj.status, None))
            }
        })
        .collect();

    let mut sequences = Vec::with_capacity(runs.len());
    let mut statuses = Vec::with_capacity(runs.len());
    let mut monitors = spec.monitor.then(CellMonitors::empty);
    let mut failures = Vec::new();
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok((seq, status, m)) => {
                if let (Some(acc), Some(m)) = (monitors.as_mut(), m) {
                    acc.absorb(&m);
                }
                sequences.push(seq);
                statuses.push(status);
            }
            Err(e) => failures.push(format!("x0 #{}: {e}", i + 1)),
        }
    }
    let stats = if failures.is_empty() {
        inter_execution_stats(sequences.iter().map(|s| s.as_slice())).map_err(|e| e.to_string())
    } else {
        Err(failures.join("; "))
    };
    CellResult {
        spec: gen_spec.clone(),
        lambda,
        stats,
        monitors,
        statuses,
    }
}

/// Runs every generator record in order; `on_cell` sees each row as soon as
/// it is complete. Rows are returned in the order of `spec.generators`.
pub fn run_table_with<F>(spec: &BatchSpec, mut on_cell: F) -> Vec<CellResult>
where
    F: FnMut(usize, &CellResult),
{
    let mut rows = Vec::with_capacity(spec.generators.len());
    for (i, g) in spec.generators.iter().enumerate() {
        let row = run_cell(spec, g);
        on_cell(i, &row);
        rows.push(row);
    }
    rows
}

pub fn run_table(spec: &BatchSpec) -> Vec<CellResult> {
    run_table_with(spec, |_, _| {})
}

/// Dense `(t, V, W)` series of one run.
#[derive(Debug, Clone)]
pub struct FigureSeries {
    pub spec: GeneratorSpec,
    pub trajectory: Trajectory,
}

impl FigureSeries {
    pub fn times(&self) -> &[f64] {
        &self.trajectory.times
    }
    pub fn v(&self) -> &[f64] {
        &self.trajectory.v_values
    }
    pub fn w(&self) -> &[f64] {
        &self.trajectory.w_values
    }
}

/// Generators shown side by side in the `V`/`W` plots.
pub fn figure_generators(sigma: f64) -> Vec<GeneratorSpec> {
    vec![
        GeneratorSpec::static_(sigma),
        GeneratorSpec::dynamic(sigma, 0.0),
        GeneratorSpec::dynamic(sigma, 0.1),
        GeneratorSpec::dynamic(sigma, 1.0),
    ]
}

pub fn figure_series<S: EventSystem>(
    system: &S,
    kappa: Option<f64>,
    generators: &[GeneratorSpec],
    x0: &[f64],
    config: &SimConfig,
) -> Result<Vec<FigureSeries>, StatsError> {
    generators
        .par_iter()
        .map(|spec| {
            let gen = spec.build(kappa)?;
            let trajectory = simulate(system, &gen, x0, config)?;
            Ok(FigureSeries {
                spec: spec.clone(),
                trajectory,
            })
        })
        .collect()
}
