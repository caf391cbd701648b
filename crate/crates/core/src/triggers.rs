//! Static and dynamic event generators.
//!
//! Both generators are built on the static trigger expression
//! `s = σ·decay(x) − error(x, e)` (see [`TriggerTerms`]). The static rule
//! fires when `s ≤ 0`. The dynamic rule carries an internal variable `η`,
//! filtered as `η̇ = −β(η) + s` from `η(0) = 0`, and fires when
//! `η + θ·s ≤ 0`. Trigger values are always evaluated with the error held
//! since the last execution, i.e. the left limit `e(t⁻)`; the reset happens
//! afterwards in [`GeneratorState::on_execution`].

use thiserror::Error;

use crate::kinf::{KInfError, KInfFunction};
use crate::plant::{EventSystem, LinearPlant, NonlinearProblem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriggerError {
    #[error("sigma = {0} must lie in (0, 1)")]
    Sigma(f64),
    #[error("theta = {0} must be finite and >= 0")]
    Theta(f64),
    #[error("lambda = {0} must be finite and > 0")]
    Lambda(f64),
    #[error("execution at t = {t} does not follow the previous one at {last}")]
    Sequencing { t: f64, last: f64 },
    #[error("dimension mismatch: sampled state has {expected} entries, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("dynamic generator needs lambda, beta or a plant decay rate")]
    MissingDecay,
    #[error(transparent)]
    Beta(#[from] KInfError),
}

fn check_sigma(sigma: f64) -> Result<(), TriggerError> {
    if sigma > 0.0 && sigma < 1.0 {
        Ok(())
    } else {
        Err(TriggerError::Sigma(sigma))
    }
}

/// Fires when `σ·decay − error ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticGenerator {
    sigma: f64,
}

impl StaticGenerator {
    pub fn new(sigma: f64) -> Result<Self, TriggerError> {
        check_sigma(sigma)?;
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// The decay term `β(η)` of the internal variable.
#[derive(Debug, Clone, PartialEq)]
pub enum EtaDecay {
    /// `β(η) = λη`
    Linear { lambda: f64 },
    General(KInfFunction),
}

impl EtaDecay {
    #[inline]
    pub fn eval(&self, eta: f64) -> f64 {
        match self {
            EtaDecay::Linear { lambda } => lambda * eta,
            // η may sit a rounding error below zero right at a θ = 0 event
            EtaDecay::General(f) => {
                if eta >= 0.0 {
                    f.apply(eta)
                } else {
                    -f.apply(-eta)
                }
            }
        }
    }
}

/// Fires when `η + θ·(σ·decay − error) ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicGenerator {
    sigma: f64,
    theta: f64,
    decay: EtaDecay,
    static_sign: f64,
}

impl DynamicGenerator {
    /// Linear filter `β(η) = λη`.
    pub fn linear(sigma: f64, theta: f64, lambda: f64) -> Result<Self, TriggerError> {
        check_sigma(sigma)?;
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(TriggerError::Theta(theta));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(TriggerError::Lambda(lambda));
        }
        Ok(Self {
            sigma,
            theta,
            decay: EtaDecay::Linear { lambda },
            static_sign: 1.0,
        })
    }

    /// `λ = (1−σ)κ`, the choice that yields the `e^{(σ−1)κt}` decay bound on `V`.
    pub fn with_matched_lambda(sigma: f64, theta: f64, kappa: f64) -> Result<Self, TriggerError> {
        Self::linear(sigma, theta, (1.0 - sigma) * kappa)
    }

    /// General K∞ filter decay `β`.
    pub fn with_beta(sigma: f64, theta: f64, beta: KInfFunction) -> Result<Self, TriggerError> {
        check_sigma(sigma)?;
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(TriggerError::Theta(theta));
        }
        beta.validate()?;
        Ok(Self {
            sigma,
            theta,
            decay: EtaDecay::General(beta),
            static_sign: 1.0,
        })
    }

    /// Fault injection for the invariant checker: flips the sign of the
    /// static term inside the trigger rule (not inside `η̇`).
    #[doc(hidden)]
    pub fn with_negated_static_term(mut self) -> Self {
        self.static_sign = -self.static_sign;
        self
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn decay(&self) -> &EtaDecay {
        &self.decay
    }
    pub fn lambda(&self) -> Option<f64> {
        match self.decay {
            EtaDecay::Linear { lambda } => Some(lambda),
            EtaDecay::General(_) => None,
        }
    }

    pub fn beta(&self, eta: f64) -> f64 {
        self.decay.eval(eta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventGenerator {
    Static(StaticGenerator),
    Dynamic(DynamicGenerator),
}

impl From<StaticGenerator> for EventGenerator {
    fn from(g: StaticGenerator) -> Self {
        EventGenerator::Static(g)
    }
}

impl From<DynamicGenerator> for EventGenerator {
    fn from(g: DynamicGenerator) -> Self {
        EventGenerator::Dynamic(g)
    }
}

impl EventGenerator {
    pub fn sigma(&self) -> f64 {
        match self {
            EventGenerator::Static(g) => g.sigma,
            EventGenerator::Dynamic(g) => g.sigma,
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match self {
            EventGenerator::Static(_) => None,
            EventGenerator::Dynamic(g) => Some(g.theta),
        }
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(self, EventGenerator::Dynamic(_))
    }

    /// Trigger value given `η` and the static expression; an event fires when ≤ 0.
    #[inline]
    pub fn trigger_value(&self, eta: f64, static_value: f64) -> f64 {
        match self {
            EventGenerator::Static(_) => static_value,
            EventGenerator::Dynamic(g) => dynamic_trigger_value(g, eta, static_value),
        }
    }

    /// `η̇`; identically zero for the static generator.
    #[inline]
    pub fn eta_rate(&self, eta: f64, static_value: f64) -> f64 {
        match self {
            EventGenerator::Static(_) => 0.0,
            EventGenerator::Dynamic(g) => eta_derivative(g, eta, static_value),
        }
    }
}

/// `x(t_i) − x(t)`.
pub fn error_vector(state: &GeneratorState, x: &[f64]) -> Vec<f64> {
    state
        .sampled_state
        .iter()
        .zip(x)
        .map(|(s, xi)| s - xi)
        .collect()
}

/// `σ·xᵀQx − 2·xᵀPBKe`.
pub fn static_trigger_value_linear(plant: &LinearPlant, sigma: f64, x: &[f64], e: &[f64]) -> f64 {
    plant.trigger_terms(x, e).static_value(sigma)
}

/// `σ·α(‖x‖) − γ(‖e‖)`.
pub fn static_trigger_value_nonlinear(
    problem: &NonlinearProblem,
    gen: &StaticGenerator,
    x: &[f64],
    e: &[f64],
) -> f64 {
    problem.trigger_terms(x, e).static_value(gen.sigma)
}

/// `η̇ = −β(η) + s`, sharing `s` with the trigger rule.
#[inline]
pub fn eta_derivative(gen: &DynamicGenerator, eta: f64, static_value: f64) -> f64 {
    static_value - gen.decay.eval(eta)
}

/// `η + θ·s`.
#[inline]
pub fn dynamic_trigger_value(gen: &DynamicGenerator, eta: f64, static_value: f64) -> f64 {
    eta + gen.static_sign * gen.theta * static_value
}

/// Per-simulation generator memory.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorState {
    pub eta: f64,
    pub sampled_state: Vec<f64>,
    pub last_execution_time: f64,
}

impl GeneratorState {
    /// State at `t_0`, where the first sample is taken.
    pub fn initial(x0: &[f64], t0: f64, eta0: f64) -> Self {
        Self {
            eta: eta0,
            sampled_state: x0.to_vec(),
            last_execution_time: t0,
        }
    }

    /// Samples `x` at time `t`. `η` is continuous across executions.
    pub fn on_execution(&self, x: &[f64], t: f64) -> Result<Self, TriggerError> {
        if !(t > self.last_execution_time) {
            return Err(TriggerError::Sequencing {
                t,
                last: self.last_execution_time,
            });
        }
        if x.len() != self.sampled_state.len() {
            return Err(TriggerError::Dimension {
                expected: self.sampled_state.len(),
                got: x.len(),
            });
        }
        Ok(Self {
            eta: self.eta,
            sampled_state: x.to_vec(),
            last_execution_time: t,
        })
    }
}
