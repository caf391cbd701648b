//! Declarative run configuration (TOML).
//!
//! ```toml
//! [plant]
//! kind = "linear"
//! a = [[0.0, 1.0], [-2.0, 3.0]]
//! b = [[0.0], [1.0]]
//! k = [[1.0, -4.0]]
//! p = [[1.0, 0.25], [0.25, 1.0]]
//! q = [[0.5, 0.25], [0.25, 1.5]]
//! kappa = 0.48            # optional override of the computed decay rate
//!
//! [generator]
//! type = "dynamic"
//! sigma = 0.001
//! theta = 1.0             # lambda defaults to (1 - sigma) * kappa
//!
//! [initial]
//! x0 = [10.0, 0.0]
//!
//! [sim]
//! dt = 1e-4
//! horizon = 10.0
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinf::KInfFunction;
use crate::plant::{LinearPlant, NonlinearProblem, Plant, PlantError, VectorField};
use crate::sim::SimConfig;
use crate::stats::{circle_initial_conditions, FilterDecay, GeneratorSpec, StatsError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("missing [{0}] section")]
    MissingSection(&'static str),
    #[error("bad override `{0}`: expected KEY=VALUE")]
    Override(String),
    #[error("invalid plant: {0}")]
    Plant(#[from] PlantError),
    #[error("invalid initial conditions: {0}")]
    Initial(String),
    #[error("invalid {0}: {1}")]
    Invalid(&'static str, String),
}

impl From<StatsError> for ConfigError {
    fn from(e: StatsError) -> Self {
        ConfigError::Initial(e.to_string())
    }
}

/// Dense row-major matrix literal.
pub type MatrixLiteral = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSpec {
    pub a: MatrixLiteral,
    pub b: MatrixLiteral,
    pub k: MatrixLiteral,
    pub p: MatrixLiteral,
    pub q: MatrixLiteral,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearSpec {
    /// Registry name: `cubic` or `linear`.
    pub field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<KInfFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<KInfFunction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlantSpec {
    Linear(LinearSpec),
    Nonlinear(NonlinearSpec),
}

fn matrix(name: &str, lit: &MatrixLiteral) -> Result<DMatrix<f64>, PlantError> {
    let rows = lit.len();
    let cols = lit.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 || lit.iter().any(|r| r.len() != cols) {
        return Err(PlantError::Dimension(format!(
            "matrix {name} must be a non-empty rectangular list of rows"
        )));
    }
    Ok(DMatrix::from_row_iterator(
        rows,
        cols,
        lit.iter().flatten().copied(),
    ))
}

impl LinearSpec {
    pub fn benchmark() -> Self {
        Self {
            a: vec![vec![0.0, 1.0], vec![-2.0, 3.0]],
            b: vec![vec![0.0], vec![1.0]],
            k: vec![vec![1.0, -4.0]],
            p: vec![vec![1.0, 0.25], vec![0.25, 1.0]],
            q: vec![vec![0.5, 0.25], vec![0.25, 1.5]],
            kappa: Some(0.48),
        }
    }

    pub fn build(&self) -> Result<LinearPlant, PlantError> {
        let plant = LinearPlant::new(
            matrix("a", &self.a)?,
            matrix("b", &self.b)?,
            matrix("k", &self.k)?,
            matrix("p", &self.p)?,
            matrix("q", &self.q)?,
        )?;
        match self.kappa {
            Some(k) => plant.with_kappa(k),
            None => Ok(plant),
        }
    }
}

impl PlantSpec {
    pub fn build(&self) -> Result<Plant, PlantError> {
        Ok(match self {
            PlantSpec::Linear(l) => l.build()?.into(),
            PlantSpec::Nonlinear(nl) => {
                let base = match nl.field.as_str() {
                    "cubic" => NonlinearProblem::cubic(nl.gain.unwrap_or(0.0))?,
                    "linear" => {
                        let lin = nl.linear.as_ref().ok_or_else(|| {
                            PlantError::Dimension("field `linear` needs a [plant.linear] block".into())
                        })?;
                        NonlinearProblem::from_linear(lin.build()?)
                    }
                    other => return Err(PlantError::UnknownField(other.to_string())),
                };
                if nl.alpha.is_none() && nl.gamma.is_none() {
                    base.into()
                } else {
                    let field: VectorField = base.field().clone();
                    NonlinearProblem::new(
                        field,
                        nl.alpha.clone().unwrap_or_else(|| base.alpha().clone()),
                        nl.gamma.clone().unwrap_or_else(|| base.gamma().clone()),
                    )?
                    .into()
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleSpec {
    pub radius: f64,
    pub count: usize,
}

/// `x0` is the start point for single runs and figures; `points` or `circle`
/// is the batch set for tables and checks. Either side falls back to the other.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circle: Option<CircleSpec>,
}

fn check_dim(pts: Vec<Vec<f64>>, dim: usize) -> Result<Vec<Vec<f64>>, ConfigError> {
    if pts.is_empty() {
        return Err(ConfigError::Initial("no initial conditions".into()));
    }
    for p in &pts {
        if p.len() != dim {
            return Err(ConfigError::Initial(format!(
                "initial state {p:?} has {} entries, plant has {dim} states",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::Initial(format!("initial state {p:?} is not finite")));
        }
    }
    Ok(pts)
}

impl InitialSpec {
    /// Batch set: `points`, else `circle`, else `[x0]`.
    pub fn set(&self, dim: usize) -> Result<Vec<Vec<f64>>, ConfigError> {
        if self.points.is_some() && self.circle.is_some() {
            return Err(ConfigError::Initial("give `points` or `circle`, not both".into()));
        }
        let pts = if let Some(p) = &self.points {
            p.clone()
        } else if let Some(c) = self.circle {
            circle_initial_conditions(c.radius, c.count, dim)?
        } else if let Some(x0) = &self.x0 {
            vec![x0.clone()]
        } else {
            return Err(ConfigError::Initial(
                "give one of `x0`, `points` or `circle`".into(),
            ));
        };
        check_dim(pts, dim)
    }

    /// Single start point: `x0`, else the first member of the batch set.
    pub fn single(&self, dim: usize) -> Result<Vec<f64>, ConfigError> {
        match &self.x0 {
            Some(x0) => Ok(check_dim(vec![x0.clone()], dim)?.remove(0)),
            None => Ok(self.set(dim)?.remove(0)),
        }
    }
}

/// Cartesian sweep: optional static row per `σ`, then one dynamic row per `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default = "yes", rename = "static")]
    pub include_static: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<KInfFunction>,
}

fn yes() -> bool {
    true
}

impl SweepSpec {
    pub fn decay(&self) -> FilterDecay {
        FilterDecay {
            lambda: self.lambda,
            beta: self.beta.clone(),
        }
    }

    pub fn expand(&self) -> Vec<GeneratorSpec> {
        let mut out = Vec::new();
        for &sigma in &self.sigma {
            if self.include_static {
                out.push(GeneratorSpec::static_(sigma));
            }
            for &theta in &self.theta {
                out.push(self.decay().dynamic(sigma, theta));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Flip the sign of the static term in the dynamic trigger rule.
    NegateTrigger,
}

/// Parameters of the invariant suite run by `check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSpec {
    pub seed: u64,
    pub sigma: Vec<f64>,
    pub theta: Vec<f64>,
    /// Random states with `η0 = 0` for the ordering check against the static rule.
    pub ordering_states: usize,
    /// Additional random states with `η0 ∈ (0, 1]`.
    pub ordering_eta_states: usize,
    /// Random `(x0, η0 > 0)` pairs for the θ-monotonicity check.
    pub theta_pairs: usize,
    /// Half-width of the box random states are drawn from.
    pub state_box: f64,
    /// Initial conditions on a circle for the trajectory-level checks.
    pub trajectories: usize,
    pub radius: f64,
    pub horizon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<KInfFunction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
}

impl CheckSpec {
    pub fn decay(&self) -> FilterDecay {
        FilterDecay {
            lambda: self.lambda,
            beta: self.beta.clone(),
        }
    }
}

impl Default for CheckSpec {
    fn default() -> Self {
        Self {
            seed: 20130827,
            sigma: vec![0.001, 0.01, 0.1],
            theta: vec![0.0, 0.01, 0.1, 1.0, 10.0, 100.0],
            ordering_states: 100,
            ordering_eta_states: 20,
            theta_pairs: 50,
            state_box: 10.0,
            trajectories: 6,
            radius: 10.0,
            horizon: 10.0,
            lambda: None,
            beta: None,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureSpec {
    pub sigma: f64,
    #[serde(default = "figure_thetas")]
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<KInfFunction>,
}

fn figure_thetas() -> Vec<f64> {
    vec![0.0, 0.1, 1.0]
}

impl Default for FigureSpec {
    fn default() -> Self {
        Self {
            sigma: 0.001,
            theta: figure_thetas(),
            lambda: None,
            beta: None,
        }
    }
}

impl FigureSpec {
    pub fn generators(&self) -> Vec<GeneratorSpec> {
        let mut out = vec![GeneratorSpec::static_(self.sigma)];
        let decay = FilterDecay {
            lambda: self.lambda,
            beta: self.beta.clone(),
        };
        out.extend(self.theta.iter().map(|&t| decay.dynamic(self.sigma, t)));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<GeneratorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure: Option<FigureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

/// Shorthand override keys and the dotted paths they stand for.
const ALIASES: &[(&str, &str)] = &[
    ("sigma", "generator.sigma"),
    ("theta", "generator.theta"),
    ("lambda", "generator.lambda"),
    ("type", "generator.type"),
    ("x0", "initial.x0"),
    ("dt", "sim.dt"),
    ("horizon", "sim.horizon"),
    ("event_tol", "sim.event_tol"),
    ("record_stride", "sim.record_stride"),
    ("max_events", "sim.max_events"),
    ("seed", "check.seed"),
    ("kappa", "plant.kappa"),
];

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("single key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `KEY=VALUE` to a raw document. `KEY` is a dotted path or one of
/// the shorthands `sigma`, `theta`, `lambda`, `type`, `x0`, `dt`, `horizon`,
/// `event_tol`, `record_stride`, `max_events`, `seed`, `kappa`.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(assignment.to_string()));
    }
    let path = ALIASES
        .iter()
        .find(|(a, _)| *a == key)
        .map_or(key, |(_, p)| *p);
    let parts: Vec<&str> = path.split('.').collect();
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Override(format!("{assignment}: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn parse_with_overrides<S: AsRef<str>>(
        text: &str,
        overrides: &[S],
    ) -> Result<Self, ConfigError> {
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o.as_ref())?;
        }
        if !doc.contains_key("plant") {
            return Err(ConfigError::MissingSection("plant"));
        }
        if overrides.is_empty() {
            // keeps line/column anchors pointing into the original text
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
        } else {
            RunConfig::deserialize(toml::Value::Table(doc))
                .map_err(|e| ConfigError::Parse(format!("after overrides: {e}")))
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_overrides::<&str>(text, &[])
    }

    pub fn load<S: AsRef<str>>(path: &std::path::Path, overrides: &[S]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Generator records for a table run: `grid` entries, then the expanded sweep.
    pub fn table_generators(&self) -> Vec<GeneratorSpec> {
        let mut out = self.grid.clone();
        if let Some(s) = &self.sweep {
            out.extend(s.expand());
        }
        out
    }

    /// The benchmark plant with the full grid on the 30-point circle.
    pub fn reference() -> Self {
        Self {
            plant: PlantSpec::Linear(LinearSpec::benchmark()),
            generator: Some(GeneratorSpec::static_(0.001)),
            grid: Vec::new(),
            sweep: Some(SweepSpec {
                sigma: vec![0.001, 0.01, 0.1],
                theta: vec![0.0, 0.01, 0.1, 1.0, 10.0, 100.0],
                include_static: true,
                lambda: None,
                beta: None,
            }),
            initial: InitialSpec {
                x0: Some(vec![10.0, 0.0]),
                points: None,
                circle: Some(CircleSpec {
                    radius: 10.0,
                    count: 30,
                }),
            },
            sim: SimConfig::default(),
            check: Some(CheckSpec::default()),
            figure: Some(FigureSpec::default()),
            output: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::EventSystem;
    use crate::stats::GeneratorKind;
    use proptest::prelude::*;

    const BUNDLED: &str = include_str!("../configs/benchmark.toml");

    #[test]
    fn bundled_config_parses() {
        let cfg = RunConfig::parse(BUNDLED).unwrap();
        let plant = cfg.plant.build().unwrap();
        assert_eq!(plant.kappa(), Some(0.48));
        assert_eq!(cfg.generator.as_ref().unwrap().sigma, 0.001);
        assert_eq!(cfg.table_generators().len(), 21);
        assert_eq!(cfg.initial.set(2).unwrap().len(), 30);
        assert_eq!(cfg.initial.single(2).unwrap(), vec![10.0, 0.0]);
    }

    #[test]
    fn missing_plant_names_section() {
        let err = RunConfig::parse("[generator]\ntype = \"static\"\nsigma = 0.1\n").unwrap_err();
        assert!(matches!(err, ConfigError::MissingSection("plant")));
        assert!(err.to_string().contains("[plant]"));
    }

    #[test]
    fn unknown_keys_rejected_with_location() {
        let text = BUNDLED.replace("[sim]", "[sim]\nbogus = 1");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn overrides_change_generator() {
        let cfg = RunConfig::parse_with_overrides(BUNDLED, &["sigma=0.5", "type=\"dynamic\"", "theta=2"])
            .unwrap();
        let g = cfg.generator.unwrap();
        assert_eq!(g.sigma, 0.5);
        assert_eq!(g.kind, GeneratorKind::Dynamic);
        assert_eq!(g.theta, Some(2.0));
        let cfg = RunConfig::parse_with_overrides(BUNDLED, &["sim.dt=5e-5", "x0=[1.0, 2.0]"]).unwrap();
        assert_eq!(cfg.sim.dt, 5e-5);
        assert!(RunConfig::parse_with_overrides(BUNDLED, &["nonsense"]).is_err());
    }

    #[test]
    fn nonlinear_plant_block() {
        let text = r#"
            [plant]
            kind = "nonlinear"
            field = "cubic"
            gain = 1.0

            [generator]
            type = "dynamic"
            sigma = 0.5
            theta = 1.0
            beta = { kind = "linear", c = 1.0 }

            [initial]
            x0 = [2.0]
        "#;
        let cfg = RunConfig::parse(text).unwrap();
        let plant = cfg.plant.build().unwrap();
        assert_eq!(plant.dim(), 1);
        assert_eq!(plant.kappa(), None);
        let bad = text.replace("cubic", "quartic");
        assert!(matches!(
            RunConfig::parse(&bad).unwrap().plant.build(),
            Err(PlantError::UnknownField(_))
        ));
    }

    #[test]
    fn initial_block_sources() {
        assert!(InitialSpec::default().set(2).is_err());
        let spec = InitialSpec {
            x0: Some(vec![1.0]),
            ..Default::default()
        };
        assert!(spec.single(2).is_err());
        let spec = InitialSpec {
            points: Some(vec![vec![1.0, 2.0], vec![3.0, 4.0]]),
            ..Default::default()
        };
        assert_eq!(spec.single(2).unwrap(), vec![1.0, 2.0]);
        assert_eq!(spec.set(2).unwrap().len(), 2);
    }

    #[test]
    fn reference_round_trips() {
        let cfg = RunConfig::reference();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    fn arb_generator() -> impl Strategy<Value = GeneratorSpec> {
        prop_oneof![
            (1e-4..0.99f64).prop_map(GeneratorSpec::static_),
            (1e-4..0.99f64, 0.0..100.0f64, proptest::option::of(1e-3..2.0f64)).prop_map(
                |(s, t, l)| GeneratorSpec {
                    lambda: l,
                    ..GeneratorSpec::dynamic(s, t)
                }
            ),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn parse_serialize_parse_is_identity(
            gen in arb_generator(),
            grid in proptest::collection::vec(arb_generator(), 0..4),
            dt in 1e-6..1e-2f64,
            stride in 1usize..50,
            x0 in proptest::collection::vec(-10.0..10.0f64, 2),
        ) {
            let mut cfg = RunConfig::reference();
            cfg.generator = Some(gen);
            cfg.grid = grid;
            cfg.sim.dt = dt;
            cfg.sim.record_stride = stride;
            cfg.initial = InitialSpec { x0: Some(x0), ..Default::default() };
            let once = RunConfig::parse(&cfg.to_toml()).unwrap();
            let twice = RunConfig::parse(&once.to_toml()).unwrap();
            prop_assert_eq!(&once, &cfg);
            prop_assert_eq!(once, twice);
        }
    }
}
