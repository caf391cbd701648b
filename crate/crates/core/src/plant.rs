//! Closed-loop system definitions.
//!
//! [`LinearPlant`] holds `ẋ = Ax + BK(x+e)` together with a quadratic
//! Lyapunov function `V = xᵀPx` satisfying `(A+BK)ᵀP + P(A+BK) = −Q`.
//! [`NonlinearProblem`] covers the general `ẋ = f(x, k(x+e))` form with an
//! ISS-Lyapunov function, restricted to a registry of built-in fields.
//!
//! Both implement [`EventSystem`], the interface the simulator and the event
//! generators work against.

use log::warn;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::kinf::{KInfError, KInfFunction};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const LYAPUNOV_RESIDUAL_TOL: f64 = 1e-9;
pub const PSD_TOL: f64 = 1e-9;
const KAPPA_OVERRIDE_REL: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix {0} is not symmetric (max asymmetry {1:e})")]
    NotSymmetric(&'static str, f64),
    #[error("matrix {0} is not positive definite (smallest eigenvalue {1:e})")]
    NotPositiveDefinite(&'static str, f64),
    #[error("Lyapunov equation residual {0:e} exceeds {LYAPUNOV_RESIDUAL_TOL:e}")]
    LyapunovResidual(f64),
    #[error("Q - kappa*P is not positive semidefinite for kappa = {kappa} (smallest eigenvalue {min_eig:e})")]
    KappaTooLarge { kappa: f64, min_eig: f64 },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("unknown vector field `{0}`")]
    UnknownField(String),
    #[error(transparent)]
    KInf(#[from] KInfError),
}

/// Ingredients of the static trigger expression `σ·decay − error`.
///
/// For the linear plant `decay = xᵀQx` and `error = 2xᵀPBKe`; for the
/// nonlinear form `decay = α(‖x‖)` and `error = γ(‖e‖)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerTerms {
    pub decay: f64,
    pub error: f64,
}

impl TriggerTerms {
    #[inline]
    pub fn static_value(&self, sigma: f64) -> f64 {
        sigma * self.decay - self.error
    }
}

/// A closed loop under sample-and-hold feedback, seen through the quantities
/// event generators need.
pub trait EventSystem: Send + Sync {
    fn dim(&self) -> usize;
    /// Writes `f(x, k(x+e))` into `dx`.
    fn closed_loop(&self, x: &[f64], e: &[f64], dx: &mut [f64]);
    fn lyapunov(&self, x: &[f64]) -> f64;
    fn trigger_terms(&self, x: &[f64], e: &[f64]) -> TriggerTerms;
}

#[inline]
fn quad_form(m: &[f64], n: usize, x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        let row = &m[i * n..(i + 1) * n];
        let r: f64 = row.iter().zip(y).map(|(a, b)| a * b).sum();
        acc += x[i] * r;
    }
    acc
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn check_spd(name: &'static str, m: &DMatrix<f64>) -> Result<(), PlantError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(PlantError::NonFinite(name));
    }
    if !m.is_square() {
        return Err(PlantError::Dimension(format!("{name} must be square")));
    }
    let asym = max_abs(&(m - m.transpose()));
    if asym > SYMMETRY_TOL {
        return Err(PlantError::NotSymmetric(name, asym));
    }
    let lmin = min_eigenvalue(m);
    if !(lmin > 0.0) {
        return Err(PlantError::NotPositiveDefinite(name, lmin));
    }
    Ok(())
}

/// Largest `κ` such that `Q − κP ⪰ 0`, i.e. the smallest eigenvalue of the
/// symmetric-definite pencil `(Q, P)`.
///
/// Reduces to a standard symmetric problem through the Cholesky factor of
/// `P`: `κ = λmin(L⁻¹ Q L⁻ᵀ)` with `P = LLᵀ`.
pub fn decay_rate_kappa(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64, PlantError> {
    check_spd("P", p)?;
    check_spd("Q", q)?;
    if p.shape() != q.shape() {
        return Err(PlantError::Dimension("P and Q must have the same size".into()));
    }
    let chol = p
        .clone()
        .cholesky()
        .ok_or(PlantError::NotPositiveDefinite("P", min_eigenvalue(p)))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or(PlantError::NotPositiveDefinite("P", 0.0))?;
    let c = &l_inv * q * l_inv.transpose();
    Ok(min_eigenvalue(&c))
}

/// Closed-form `κ` for 2×2 pencils: the smaller root of `det(Q − κP) = 0`.
pub fn decay_rate_kappa_2x2(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64, PlantError> {
    if p.shape() != (2, 2) || q.shape() != (2, 2) {
        return Err(PlantError::Dimension("closed form requires 2x2 matrices".into()));
    }
    check_spd("P", p)?;
    check_spd("Q", q)?;
    // det(Q − κP) = a κ² + b κ + c
    let a = p[(0, 0)] * p[(1, 1)] - p[(0, 1)] * p[(1, 0)];
    let b = -(q[(0, 0)] * p[(1, 1)] + p[(0, 0)] * q[(1, 1)]
        - q[(0, 1)] * p[(1, 0)]
        - p[(0, 1)] * q[(1, 0)]);
    let c = q[(0, 0)] * q[(1, 1)] - q[(0, 1)] * q[(1, 0)];
    let disc = (b * b - 4.0 * a * c).max(0.0);
    // Both roots are positive; the stable form avoids cancellation.
    let big = (-b + disc.sqrt()) / (2.0 * a);
    Ok(c / (a * big))
}

/// `ẋ = Ax + Bu`, `u = K(x+e)`, with Lyapunov data `P`, `Q` and decay rate `κ`.
#[derive(Debug, Clone)]
pub struct LinearPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    k: DMatrix<f64>,
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    kappa: f64,
    kappa_computed: f64,
    n: usize,
    // row-major caches for the integrator's inner loop
    acl: Vec<f64>,
    bk: Vec<f64>,
    p_rm: Vec<f64>,
    q_rm: Vec<f64>,
    pbk: Vec<f64>,
}

impl LinearPlant {
    /// Validates the plant and computes `κ`.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        k: DMatrix<f64>,
        p: DMatrix<f64>,
        q: DMatrix<f64>,
    ) -> Result<Self, PlantError> {
        let n = a.nrows();
        for (name, m) in [("A", &a), ("B", &b), ("K", &k)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(PlantError::NonFinite(name));
            }
        }
        if !a.is_square() {
            return Err(PlantError::Dimension("A must be square".into()));
        }
        if b.nrows() != n {
            return Err(PlantError::Dimension(format!(
                "B has {} rows, expected {n}",
                b.nrows()
            )));
        }
        if k.ncols() != n || k.nrows() != b.ncols() {
            return Err(PlantError::Dimension(format!(
                "K is {}x{}, expected {}x{n}",
                k.nrows(),
                k.ncols(),
                b.ncols()
            )));
        }
        if p.shape() != (n, n) || q.shape() != (n, n) {
            return Err(PlantError::Dimension(format!("P and Q must be {n}x{n}")));
        }
        let kappa = decay_rate_kappa(&p, &q)?;
        let bk = &b * &k;
        let acl = &a + &bk;
        let residual = max_abs(&(acl.transpose() * &p + &p * &acl + &q));
        if residual > LYAPUNOV_RESIDUAL_TOL {
            return Err(PlantError::LyapunovResidual(residual));
        }
        let pbk = &p * &bk;
        Ok(Self {
            acl: row_major(&acl),
            bk: row_major(&bk),
            p_rm: row_major(&p),
            q_rm: row_major(&q),
            pbk: row_major(&pbk),
            a,
            b,
            k,
            p,
            q,
            kappa,
            kappa_computed: kappa,
            n,
        })
    }

    /// The two-state unstable benchmark `A = [0 1; −2 3]`, `B = [0; 1]`,
    /// stabilized by `K = [1 −4]`, with `P = [1 ¼; ¼ 1]` and `Q = [½ ¼; ¼ 3/2]`.
    pub fn benchmark() -> Self {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, 3.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, -4.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.25, 1.5]),
        )
        .expect("benchmark plant is valid")
    }

    /// Replaces the computed `κ` with a configured value (e.g. a rounded one).
    ///
    /// Logs a warning when it differs from the computed rate by more than 1%
    /// and rejects values for which `Q − κP` is not positive semidefinite.
    pub fn with_kappa(mut self, kappa: f64) -> Result<Self, PlantError> {
        let min_eig = min_eigenvalue(&(&self.q - &self.p * kappa));
        if !(kappa > 0.0) || min_eig < -PSD_TOL {
            return Err(PlantError::KappaTooLarge { kappa, min_eig });
        }
        if ((kappa - self.kappa_computed) / self.kappa_computed).abs() > KAPPA_OVERRIDE_REL {
            warn!(
                "configured kappa {kappa} differs from computed {} by more than 1%",
                self.kappa_computed
            );
        }
        self.kappa = kappa;
        Ok(self)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }
    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    /// Decay rate in effect (computed, or the configured override).
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn kappa_computed(&self) -> f64 {
        self.kappa_computed
    }
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn check_dim(&self, v: &[f64], what: &str) -> Result<(), PlantError> {
        if v.len() != self.n {
            return Err(PlantError::Dimension(format!(
                "{what} has length {}, expected {}",
                v.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// `A·x + B·K·(x+e)`.
    pub fn closed_loop_field(&self, x: &[f64], e: &[f64]) -> Result<Vec<f64>, PlantError> {
        self.check_dim(x, "x")?;
        self.check_dim(e, "e")?;
        let mut dx = vec![0.0; self.n];
        self.closed_loop(x, e, &mut dx);
        Ok(dx)
    }

    /// `xᵀPx`.
    pub fn lyapunov_value(&self, x: &[f64]) -> Result<f64, PlantError> {
        self.check_dim(x, "x")?;
        Ok(self.lyapunov(x))
    }

    /// Analytic `∇V·f = −xᵀQx + 2xᵀPBKe`.
    pub fn lyapunov_derivative(&self, x: &[f64], e: &[f64]) -> f64 {
        -quad_form(&self.q_rm, self.n, x, x) + 2.0 * quad_form(&self.pbk, self.n, x, e)
    }
}

impl EventSystem for LinearPlant {
    fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn closed_loop(&self, x: &[f64], e: &[f64], dx: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let acl = &self.acl[i * n..(i + 1) * n];
            let bk = &self.bk[i * n..(i + 1) * n];
            let mut v = 0.0;
            for j in 0..n {
                v += acl[j] * x[j] + bk[j] * e[j];
            }
            dx[i] = v;
        }
    }

    #[inline]
    fn lyapunov(&self, x: &[f64]) -> f64 {
        quad_form(&self.p_rm, self.n, x, x)
    }

    #[inline]
    fn trigger_terms(&self, x: &[f64], e: &[f64]) -> TriggerTerms {
        TriggerTerms {
            decay: quad_form(&self.q_rm, self.n, x, x),
            error: 2.0 * quad_form(&self.pbk, self.n, x, e),
        }
    }
}

/// Built-in vector fields for the nonlinear formulation.
#[derive(Debug, Clone)]
pub enum VectorField {
    /// `f(x,u) = Ax + Bu`, `k(x) = Kx`, `V = xᵀPx`.
    Linear(LinearPlant),
    /// Scalar `ẋ = −x³ + u`, `k(x) = −gain·x`, `V = x²`.
    Cubic { gain: f64 },
}

impl VectorField {
    pub fn name(&self) -> &'static str {
        match self {
            VectorField::Linear(_) => "linear",
            VectorField::Cubic { .. } => "cubic",
        }
    }
}

/// `ẋ = f(x, k(x+e))` with ISS-Lyapunov function `V` and gains `α`, `γ`
/// satisfying `∇V(x)·f(x,k(x+e)) ≤ −α(‖x‖) + γ(‖e‖)`.
#[derive(Debug, Clone)]
pub struct NonlinearProblem {
    field: VectorField,
    alpha: KInfFunction,
    gamma: KInfFunction,
}

/// Outcome of [`NonlinearProblem::validate_on`].
#[derive(Debug, Clone)]
pub struct IssReport {
    /// Largest observed `∇V·f + α(‖x‖) − γ(‖e‖)`; must not exceed the tolerance.
    pub max_dissipation_excess: f64,
    pub violations: Vec<(Vec<f64>, Vec<f64>, f64)>,
    pub positive_definite: bool,
    /// Lipschitz continuity of f, k, α⁻¹ and γ on compacts is assumed, not checked.
    pub lipschitz_assumed: bool,
}

impl IssReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.positive_definite
    }
}

impl NonlinearProblem {
    pub fn new(
        field: VectorField,
        alpha: KInfFunction,
        gamma: KInfFunction,
    ) -> Result<Self, PlantError> {
        alpha.validate()?;
        gamma.validate()?;
        if let VectorField::Cubic { gain } = field {
            if !(gain.is_finite() && gain >= 0.0) {
                return Err(PlantError::Dimension(format!(
                    "cubic gain must be finite and >= 0, got {gain}"
                )));
            }
        }
        Ok(Self { field, alpha, gamma })
    }

    /// Wraps a linear plant with quadratic gains `α(r) = ½λmin(Q)·r²` and
    /// `γ(r) = 2‖PBK‖²/λmin(Q)·r²`, which bound `−xᵀQx + 2xᵀPBKe` by
    /// Young's inequality.
    pub fn from_linear(plant: LinearPlant) -> Self {
        let qmin = min_eigenvalue(plant.q());
        let pbk = plant.p() * plant.b() * plant.k();
        let pbk_norm = pbk.norm();
        // 2xᵀPBKe ≤ (qmin/2)‖x‖² + (2‖PBK‖²/qmin)‖e‖²
        let alpha = KInfFunction::power(0.5 * qmin, 2.0);
        let gamma = KInfFunction::power((2.0 * pbk_norm * pbk_norm / qmin).max(1e-12), 2.0);
        Self::new(VectorField::Linear(plant), alpha, gamma).expect("derived gains are valid")
    }

    /// Scalar cubic demo with its exact gains:
    /// `α(r) = 2r⁴ + gain·r²`, `γ(r) = gain·r²` (or `r` when `gain = 0`).
    pub fn cubic(gain: f64) -> Result<Self, PlantError> {
        let alpha = if gain > 0.0 {
            KInfFunction::sum(KInfFunction::power(2.0, 4.0), KInfFunction::power(gain, 2.0))
        } else {
            KInfFunction::power(2.0, 4.0)
        };
        let gamma = if gain > 0.0 {
            KInfFunction::power(gain, 2.0)
        } else {
            KInfFunction::linear(1.0)
        };
        Self::new(VectorField::Cubic { gain }, alpha, gamma)
    }

    pub fn field(&self) -> &VectorField {
        &self.field
    }
    pub fn alpha(&self) -> &KInfFunction {
        &self.alpha
    }
    pub fn gamma(&self) -> &KInfFunction {
        &self.gamma
    }

    pub fn input_dim(&self) -> usize {
        match &self.field {
            VectorField::Linear(p) => p.input_dim(),
            VectorField::Cubic { .. } => 1,
        }
    }

    /// Open-loop vector field `f(x, u)`.
    pub fn vector_field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        match &self.field {
            VectorField::Linear(p) => {
                let ax = p.a() * DVector::from_column_slice(x);
                let bu = p.b() * DVector::from_column_slice(u);
                for i in 0..dx.len() {
                    dx[i] = ax[i] + bu[i];
                }
            }
            VectorField::Cubic { .. } => dx[0] = -x[0] * x[0] * x[0] + u[0],
        }
    }

    /// Feedback `k(x)`.
    pub fn feedback(&self, x: &[f64]) -> Vec<f64> {
        match &self.field {
            VectorField::Linear(p) => {
                (p.k() * DVector::from_column_slice(x)).iter().copied().collect()
            }
            VectorField::Cubic { gain } => vec![-gain * x[0]],
        }
    }

    fn check_dim(&self, v: &[f64]) -> Result<(), PlantError> {
        if v.len() != self.dim() {
            return Err(PlantError::Dimension(format!(
                "vector has length {}, expected {}",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Central-difference `∇V(x)` dotted with `f(x, k(x+e))`.
    ///
    /// `h` defaults to `1e−6·(1 + ‖x‖)`.
    pub fn grad_v_dot_f(&self, x: &[f64], e: &[f64], h: Option<f64>) -> Result<f64, PlantError> {
        self.check_dim(x)?;
        self.check_dim(e)?;
        let h = h.unwrap_or_else(|| 1e-6 * (1.0 + norm(x)));
        if !(h > 0.0) {
            return Err(PlantError::Dimension(format!("step h = {h} must be > 0")));
        }
        let mut f = vec![0.0; x.len()];
        self.closed_loop(x, e, &mut f);
        let mut xp = x.to_vec();
        let mut acc = 0.0;
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let vp = self.lyapunov(&xp);
            xp[i] = x[i] - h;
            let vm = self.lyapunov(&xp);
            xp[i] = x[i];
            acc += (vp - vm) / (2.0 * h) * f[i];
        }
        Ok(acc)
    }

    /// Samples `V(0) = 0`, `V > 0` away from the origin and the dissipation
    /// inequality over all pairs drawn from `states × errors`.
    pub fn validate_on(
        &self,
        states: &[Vec<f64>],
        errors: &[Vec<f64>],
        tol: f64,
    ) -> Result<IssReport, PlantError> {
        let zero = vec![0.0; self.dim()];
        let mut positive_definite = self.lyapunov(&zero) == 0.0;
        let mut max_excess = f64::NEG_INFINITY;
        let mut violations = Vec::new();
        for x in states {
            self.check_dim(x)?;
            if norm(x) > 0.0 && !(self.lyapunov(x) > 0.0) {
                positive_definite = false;
            }
            for e in errors {
                let lhs = self.grad_v_dot_f(x, e, None)?;
                let excess = lhs + self.alpha.apply(norm(x)) - self.gamma.apply(norm(e));
                max_excess = max_excess.max(excess);
                if excess > tol {
                    violations.push((x.clone(), e.clone(), excess));
                }
            }
        }
        Ok(IssReport {
            max_dissipation_excess: max_excess,
            violations,
            positive_definite,
            lipschitz_assumed: true,
        })
    }
}

impl EventSystem for NonlinearProblem {
    fn dim(&self) -> usize {
        match &self.field {
            VectorField::Linear(p) => p.dim(),
            VectorField::Cubic { .. } => 1,
        }
    }

    fn closed_loop(&self, x: &[f64], e: &[f64], dx: &mut [f64]) {
        match &self.field {
            VectorField::Linear(p) => p.closed_loop(x, e, dx),
            VectorField::Cubic { gain } => {
                let u = -gain * (x[0] + e[0]);
                dx[0] = -x[0] * x[0] * x[0] + u;
            }
        }
    }

    fn lyapunov(&self, x: &[f64]) -> f64 {
        match &self.field {
            VectorField::Linear(p) => p.lyapunov(x),
            VectorField::Cubic { .. } => x[0] * x[0],
        }
    }

    fn trigger_terms(&self, x: &[f64], e: &[f64]) -> TriggerTerms {
        TriggerTerms {
            decay: self.alpha.apply(norm(x)),
            error: self.gamma.apply(norm(e)),
        }
    }
}

/// Either system form, as selected by a run configuration.
#[derive(Debug, Clone)]
pub enum Plant {
    Linear(LinearPlant),
    Nonlinear(NonlinearProblem),
}

impl Plant {
    /// Decay rate backing the `e^{(σ−1)κt}` bound; linear plants only.
    pub fn kappa(&self) -> Option<f64> {
        match self {
            Plant::Linear(p) => Some(p.kappa()),
            Plant::Nonlinear(_) => None,
        }
    }
}

impl From<LinearPlant> for Plant {
    fn from(p: LinearPlant) -> Self {
        Plant::Linear(p)
    }
}

impl From<NonlinearProblem> for Plant {
    fn from(p: NonlinearProblem) -> Self {
        Plant::Nonlinear(p)
    }
}

impl EventSystem for Plant {
    fn dim(&self) -> usize {
        match self {
            Plant::Linear(p) => p.dim(),
            Plant::Nonlinear(p) => p.dim(),
        }
    }

    #[inline]
    fn closed_loop(&self, x: &[f64], e: &[f64], dx: &mut [f64]) {
        match self {
            Plant::Linear(p) => p.closed_loop(x, e, dx),
            Plant::Nonlinear(p) => p.closed_loop(x, e, dx),
        }
    }

    #[inline]
    fn lyapunov(&self, x: &[f64]) -> f64 {
        match self {
            Plant::Linear(p) => p.lyapunov(x),
            Plant::Nonlinear(p) => p.lyapunov(x),
        }
    }

    #[inline]
    fn trigger_terms(&self, x: &[f64], e: &[f64]) -> TriggerTerms {
        match self {
            Plant::Linear(p) => p.trigger_terms(x, e),
            Plant::Nonlinear(p) => p.trigger_terms(x, e),
        }
    }
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
