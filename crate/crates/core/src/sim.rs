//! Closed-loop simulation executive.
//!
//! The augmented state `[x; η]` is advanced with classical RK4 at a fixed
//! step while the sampled state `x(t_i)` is frozen, so `e = x(t_i) − x`
//! inside every stage. After each step the generator's trigger value is
//! evaluated; when it has dropped to `≤ 0` the crossing is bracketed inside
//! the step and localized by bisection, re-integrating from the start of the
//! step to every probe time. The execution is applied at the last probe that
//! still had a positive trigger value, so recorded trigger values never go
//! materially negative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{norm, EventSystem};
use crate::triggers::{EventGenerator, GeneratorState, TriggerError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("dimension mismatch: system has {expected} states, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("numerical blow-up after t = {last_valid_time}")]
    Blowup { last_valid_time: f64 },
    #[error("internal logic error: {0}")]
    Logic(String),
    #[error(transparent)]
    Trigger(#[from] TriggerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Base integration step (s).
    pub dt: f64,
    /// Simulated frame (s).
    pub horizon: f64,
    /// Event-time localization tolerance (s).
    pub event_tol: f64,
    pub max_events: usize,
    /// Store every k-th step.
    pub record_stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            horizon: 10.0,
            event_tol: 1e-10,
            max_events: 10_000_000,
            record_stride: 10,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt = {} must be > 0", self.dt));
        }
        if !(self.event_tol > 0.0 && self.event_tol < self.dt) {
            return bad(format!("event_tol = {} must lie in (0, dt)", self.event_tol));
        }
        if !(self.horizon.is_finite() && self.horizon > self.dt) {
            return bad(format!("horizon = {} must exceed dt", self.horizon));
        }
        if self.max_events == 0 || self.record_stride == 0 {
            return bad("max_events and record_stride must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    FiniteTimeStabilized,
    MaxEventsExceeded,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::FiniteTimeStabilized => "finite-time-stabilized",
            RunStatus::MaxEventsExceeded => "max-events-exceeded",
        }
    }
}

/// Recorded monitors of one run.
///
/// Samples are taken every `record_stride` steps and on both sides of every
/// execution, so `times` is non-decreasing with a repeated entry at each
/// execution instant (pre-reset sample first).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub etas: Vec<f64>,
    pub v_values: Vec<f64>,
    pub w_values: Vec<f64>,
    pub trigger_values: Vec<f64>,
    /// Execution times `t_i`, starting with `t_0 = 0`.
    pub execution_times: Vec<f64>,
    pub status: RunStatus,
}

impl Trajectory {
    fn new() -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            etas: Vec::new(),
            v_values: Vec::new(),
            w_values: Vec::new(),
            trigger_values: Vec::new(),
            execution_times: Vec::new(),
            status: RunStatus::Completed,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn inter_execution_times(&self) -> Vec<f64> {
        self.execution_times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.states.last().map(|v| v.as_slice())
    }
}

/// One classical RK4 step of `ẏ = field(y)`.
pub fn rk4_step<F>(mut field: F, y: &[f64], dt: f64) -> Result<Vec<f64>, SimError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut scratch = Rk4Scratch::new(y.len());
    let mut out = vec![0.0; y.len()];
    scratch.step(&mut field, y, dt, &mut out);
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(SimError::Blowup { last_valid_time: 0.0 })
    }
}

struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    #[inline]
    fn step<F>(&mut self, field: &mut F, y: &[f64], h: f64, out: &mut [f64])
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let n = y.len();
        field(y, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        field(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        field(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        field(&self.tmp, &mut self.k4);
        for i in 0..n {
            out[i] = y[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Bracket `[before, after]` around a trigger crossing, `after − before ≤ tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventBracket {
    /// Last probe with a positive trigger value.
    pub before: f64,
    /// First probe with a non-positive trigger value.
    pub after: f64,
}

/// Bisection localization of the first `trigger ≤ 0` crossing in `(t_lo, t_hi]`.
///
/// Requires `trigger(t_lo) > 0` and `trigger(t_hi) ≤ 0`.
pub fn locate_event<F>(
    mut trigger: F,
    t_lo: f64,
    t_hi: f64,
    event_tol: f64,
) -> Result<EventBracket, SimError>
where
    F: FnMut(f64) -> f64,
{
    let (g_lo, g_hi) = (trigger(t_lo), trigger(t_hi));
    if !(g_lo > 0.0 && g_hi <= 0.0) {
        return Err(SimError::Logic(format!(
            "no sign change in bracket: g({t_lo}) = {g_lo}, g({t_hi}) = {g_hi}"
        )));
    }
    Ok(bisect(trigger, t_lo, t_hi, event_tol))
}

fn bisect<F>(mut trigger: F, mut lo: f64, mut hi: f64, tol: f64) -> EventBracket
where
    F: FnMut(f64) -> f64,
{
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if trigger(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    EventBracket { before: lo, after: hi }
}

/// Relative size of `‖x(t_i)‖` below which the run counts as stabilized in finite time.
const FINITE_TIME_REL: f64 = 1e-9;

struct Engine<'a, S: EventSystem + ?Sized> {
    sys: &'a S,
    gen: &'a EventGenerator,
    n: usize,
    sampled: Vec<f64>,
    e: Vec<f64>,
    scratch: Rk4Scratch,
}

impl<'a, S: EventSystem + ?Sized> Engine<'a, S> {
    fn new(sys: &'a S, gen: &'a EventGenerator, x0: &[f64]) -> Self {
        let n = sys.dim();
        Self {
            sys,
            gen,
            n,
            sampled: x0.to_vec(),
            e: vec![0.0; n],
            scratch: Rk4Scratch::new(n + 1),
        }
    }

    /// Trigger value and static expression at augmented state `y`.
    #[inline]
    fn trigger(&mut self, y: &[f64]) -> (f64, f64) {
        let (x, eta) = (&y[..self.n], y[self.n]);
        for i in 0..self.n {
            self.e[i] = self.sampled[i] - x[i];
        }
        let s = self.sys.trigger_terms(x, &self.e).static_value(self.gen.sigma());
        (self.gen.trigger_value(eta, s), s)
    }

    #[inline]
    fn advance(&mut self, y: &[f64], h: f64, out: &mut [f64]) {
        let (sys, gen, n, sampled) = (self.sys, self.gen, self.n, &self.sampled);
        let e = &mut self.e;
        let dynamic = gen.is_dynamic();
        let sigma = gen.sigma();
        let mut field = |y: &[f64], dy: &mut [f64]| {
            let x = &y[..n];
            for i in 0..n {
                e[i] = sampled[i] - x[i];
            }
            sys.closed_loop(x, e, &mut dy[..n]);
            dy[n] = if dynamic {
                let s = sys.trigger_terms(x, e).static_value(sigma);
                gen.eta_rate(y[n], s)
            } else {
                0.0
            };
        };
        self.scratch.step(&mut field, y, h, out);
    }

    fn record(&mut self, traj: &mut Trajectory, t: f64, y: &[f64], g: f64) {
        let x = &y[..self.n];
        let v = self.sys.lyapunov(x);
        traj.times.push(t);
        traj.states.push(x.to_vec());
        traj.etas.push(y[self.n]);
        traj.v_values.push(v);
        traj.w_values.push(v + y[self.n]);
        traj.trigger_values.push(g);
    }

    /// Runs from `(x0, η0)` at `t = 0` with a fresh sample. Stops after the
    /// first execution when `first_only` is set.
    fn run(
        &mut self,
        x0: &[f64],
        eta0: f64,
        config: &SimConfig,
        first_only: bool,
        record: bool,
    ) -> Result<Trajectory, SimError> {
        let n = self.n;
        let mut traj = Trajectory::new();
        let mut state = GeneratorState::initial(x0, 0.0, eta0);
        traj.execution_times.push(0.0);

        let mut y = x0.to_vec();
        y.push(eta0);
        if record || first_only {
            let (g0, _) = self.trigger(&y);
            self.record(&mut traj, 0.0, &y, g0);
        }
        let x0_norm = norm(x0);
        if !(self.trigger(&y).0.is_finite() && self.sys.lyapunov(x0).is_finite()) {
            return Err(SimError::Blowup { last_valid_time: 0.0 });
        }
        if x0_norm == 0.0 {
            traj.status = RunStatus::FiniteTimeStabilized;
            return Ok(traj);
        }

        let mut y_new = vec![0.0; n + 1];
        let mut y_probe = vec![0.0; n + 1];
        let mut t = 0.0_f64;
        let mut steps: usize = 0;
        let end_slack = 1e-12 * config.horizon.max(1.0);
        let mut last_recorded_step = true;

        while config.horizon - t > end_slack {
            let h = config.dt.min(config.horizon - t);
            self.advance(&y, h, &mut y_new);
            if !y_new.iter().all(|v| v.is_finite()) {
                return Err(SimError::Blowup { last_valid_time: t });
            }
            let (g_new, _) = self.trigger(&y_new);
            if !g_new.is_finite() {
                return Err(SimError::Blowup { last_valid_time: t });
            }
            if g_new > 0.0 {
                t += h;
                std::mem::swap(&mut y, &mut y_new);
                steps += 1;
                last_recorded_step = false;
                if record && steps % config.record_stride == 0 {
                    self.record(&mut traj, t, &y, g_new);
                    last_recorded_step = true;
                }
                continue;
            }

            // crossing inside (t, t + h]
            let y_start = y.clone();
            let bracket = bisect(
                |offset| {
                    self.advance(&y_start, offset, &mut y_probe);
                    self.trigger(&y_probe).0
                },
                0.0,
                h,
                config.event_tol,
            );
            let offset = if bracket.before > 0.0 { bracket.before } else { bracket.after };
            if offset <= 0.0 {
                return Err(SimError::Logic(format!(
                    "event localized at the previous execution time {t}"
                )));
            }
            self.advance(&y_start, offset, &mut y);
            let t_event = t + offset;
            let (g_pre, _) = self.trigger(&y);
            if record {
                self.record(&mut traj, t_event, &y, g_pre);
            }

            state = state.on_execution(&y[..n], t_event)?;
            self.sampled.copy_from_slice(&state.sampled_state);
            traj.execution_times.push(t_event);
            t = t_event;
            let (g_post, _) = self.trigger(&y);
            if record {
                self.record(&mut traj, t, &y, g_post);
            }
            last_recorded_step = true;
            if first_only {
                return Ok(traj);
            }
            if norm(&y[..n]) < FINITE_TIME_REL * x0_norm {
                traj.status = RunStatus::FiniteTimeStabilized;
                return Ok(traj);
            }
            if traj.execution_times.len() > config.max_events {
                traj.status = RunStatus::MaxEventsExceeded;
                return Ok(traj);
            }
            if g_post < 0.0 {
                return Err(SimError::Logic(format!(
                    "trigger value {g_post:e} still negative after the execution at t = {t}; dt too coarse"
                )));
            }
        }
        if (record || first_only) && !last_recorded_step {
            let (g_end, _) = self.trigger(&y);
            self.record(&mut traj, t, &y, g_end);
        }
        Ok(traj)
    }
}

fn check_inputs<S: EventSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    config: &SimConfig,
) -> Result<(), SimError> {
    config.validate()?;
    if x0.len() != sys.dim() {
        return Err(SimError::Dimension {
            expected: sys.dim(),
            got: x0.len(),
        });
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(SimError::Config("initial state must be finite".into()));
    }
    Ok(())
}

/// Simulates the event-triggered closed loop from `x0` with `η(0) = 0`.
pub fn simulate<S: EventSystem + ?Sized>(
    sys: &S,
    gen: &EventGenerator,
    x0: &[f64],
    config: &SimConfig,
) -> Result<Trajectory, SimError> {
    check_inputs(sys, x0, config)?;
    Engine::new(sys, gen, x0).run(x0, 0.0, config, false, true)
}

/// Like [`simulate`] but without storing monitors; only execution times and
/// the final status are returned.
pub fn simulate_events<S: EventSystem + ?Sized>(
    sys: &S,
    gen: &EventGenerator,
    x0: &[f64],
    config: &SimConfig,
) -> Result<Trajectory, SimError> {
    check_inputs(sys, x0, config)?;
    Engine::new(sys, gen, x0).run(x0, 0.0, config, false, false)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstExecution {
    pub time: f64,
    /// `false` when the horizon was reached without an event.
    pub fired: bool,
}

/// Time of the first execution after sampling `x0` at `t = 0` with `η = eta0`.
pub fn first_execution_time<S: EventSystem + ?Sized>(
    sys: &S,
    gen: &EventGenerator,
    x0: &[f64],
    eta0: f64,
    config: &SimConfig,
) -> Result<FirstExecution, SimError> {
    check_inputs(sys, x0, config)?;
    if norm(x0) == 0.0 {
        return Err(SimError::Config("first execution time needs x0 != 0".into()));
    }
    if !(eta0 >= 0.0) {
        return Err(SimError::Config(format!("eta0 = {eta0} must be >= 0")));
    }
    let traj = Engine::new(sys, gen, x0).run(x0, eta0, config, true, false)?;
    Ok(match traj.execution_times.get(1) {
        Some(&t) => FirstExecution { time: t, fired: true },
        None => FirstExecution {
            time: config.horizon,
            fired: false,
        },
    })
}

/// Result of [`performance_bound_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceReport {
    /// `max (V(t) − V(0)e^{(σ−1)κt}) / V(0)` over recorded samples.
    pub max_relative_violation: f64,
    /// `max (V(t) − W(t))`; non-positive when `η ≥ 0`.
    pub max_v_minus_w: f64,
}

pub fn performance_bound_check(traj: &Trajectory, sigma: f64, kappa: f64) -> PerformanceReport {
    let v0 = traj.v_values.first().copied().unwrap_or(0.0);
    let mut max_viol = f64::NEG_INFINITY;
    let mut max_vw = f64::NEG_INFINITY;
    for ((t, v), w) in traj.times.iter().zip(&traj.v_values).zip(&traj.w_values) {
        if v0 > 0.0 {
            let bound = v0 * ((sigma - 1.0) * kappa * t).exp();
            max_viol = max_viol.max((v - bound) / v0);
        }
        max_vw = max_vw.max(v - w);
    }
    PerformanceReport {
        max_relative_violation: if v0 > 0.0 { max_viol } else { 0.0 },
        max_v_minus_w: max_vw,
    }
}

/// Margins of the two nonnegativity inequalities on `η` and `η + θs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonnegativityMargins {
    pub min_eta: f64,
    pub max_eta: f64,
    pub min_trigger: f64,
}

impl NonnegativityMargins {
    pub fn eta_tolerance(&self) -> f64 {
        1e-8 * (1.0 + self.max_eta.abs())
    }

    pub fn holds(&self) -> bool {
        self.min_eta >= -self.eta_tolerance() && self.min_trigger >= -1e-8
    }
}

pub fn nonnegativity_margins(traj: &Trajectory) -> NonnegativityMargins {
    let fold_min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    NonnegativityMargins {
        min_eta: fold_min(&traj.etas),
        max_eta: traj.etas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_trigger: fold_min(&traj.trigger_values),
    }
}

/// Largest increase of `W` between consecutive samples, relative to `W(0)`.
pub fn w_max_increase(traj: &Trajectory) -> f64 {
    let w0 = traj.w_values.first().copied().unwrap_or(0.0);
    let inc = traj
        .w_values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    if w0 > 0.0 {
        inc / w0
    } else {
        inc
    }
}

/// Total variation of `series` minus its net decrease: twice the sum of all rises.
pub fn excess_total_variation(series: &[f64]) -> f64 {
    let tv: f64 = series.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    match (series.first(), series.last()) {
        (Some(a), Some(b)) => tv - (a - b),
        _ => 0.0,
    }
}

/// Largest rise accumulated over a single run of consecutive increases.
pub fn max_single_rise(series: &[f64]) -> f64 {
    let mut best = 0.0_f64;
    let mut run = 0.0;
    for w in series.windows(2) {
        let d = w[1] - w[0];
        if d > 0.0 {
            run += d;
            best = best.max(run);
        } else if d < 0.0 {
            run = 0.0;
        }
    }
    best
}
