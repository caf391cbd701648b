//! Class-K∞ comparison functions.
//!
//! The generators and the ISS dissipation bound are phrased in terms of
//! scalar functions that vanish at zero, are strictly increasing and are
//! unbounded. Rather than accepting arbitrary closures, this module offers a
//! closed family (linear, power and sums of those) that can be validated,
//! serialized and shared freely between worker threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KInfError {
    #[error("K-infinity function evaluated at negative argument {0}")]
    NegativeArgument(f64),
    #[error("validation grid is empty")]
    EmptyGrid,
    #[error("validation grid must start at 0 and be strictly increasing")]
    BadGrid,
    #[error("invalid K-infinity parameters: {0}")]
    InvalidParameters(String),
}

/// A class-K∞ function from a small closed family.
///
/// Serialized as `{ kind = "linear", c = .. }`, `{ kind = "power", c = .., p = .. }`
/// or `{ kind = "sum", left = {..}, right = {..} }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum KInfFunction {
    /// `c·r`
    Linear { c: f64 },
    /// `c·r^p`, `p ≥ 1`
    Power { c: f64, p: f64 },
    /// Pointwise sum of two functions.
    Sum {
        left: Box<KInfFunction>,
        right: Box<KInfFunction>,
    },
}

impl KInfFunction {
    pub fn linear(c: f64) -> Self {
        KInfFunction::Linear { c }
    }

    pub fn power(c: f64, p: f64) -> Self {
        KInfFunction::Power { c, p }
    }

    pub fn sum(left: KInfFunction, right: KInfFunction) -> Self {
        KInfFunction::Sum {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Checks the parameter constraints that make the family K∞ by construction.
    pub fn validate(&self) -> Result<(), KInfError> {
        match self {
            KInfFunction::Linear { c } => check_gain(*c),
            KInfFunction::Power { c, p } => {
                check_gain(*c)?;
                if !(p.is_finite() && *p >= 1.0) {
                    return Err(KInfError::InvalidParameters(format!(
                        "exponent p = {p} must be finite and >= 1"
                    )));
                }
                Ok(())
            }
            KInfFunction::Sum { left, right } => {
                left.validate()?;
                right.validate()
            }
        }
    }

    /// Evaluates the function at `r ≥ 0`.
    pub fn eval(&self, r: f64) -> Result<f64, KInfError> {
        if r < 0.0 || r.is_nan() {
            return Err(KInfError::NegativeArgument(r));
        }
        Ok(self.apply(r))
    }

    /// Evaluation without the domain check, for callers that pass norms.
    pub(crate) fn apply(&self, r: f64) -> f64 {
        match self {
            KInfFunction::Linear { c } => c * r,
            KInfFunction::Power { c, p } => {
                if r == 0.0 {
                    0.0
                } else if *p == 2.0 {
                    c * r * r
                } else {
                    c * r.powf(*p)
                }
            }
            KInfFunction::Sum { left, right } => left.apply(r) + right.apply(r),
        }
    }
}

fn check_gain(c: f64) -> Result<(), KInfError> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(KInfError::InvalidParameters(format!(
            "gain c = {c} must be finite and > 0"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KInfViolation {
    NonzeroAtOrigin(f64),
    NotStrictlyIncreasing { r1: f64, r2: f64, f1: f64, f2: f64 },
    Bounded { r: f64, value: f64 },
}

impl std::fmt::Display for KInfViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KInfViolation::NonzeroAtOrigin(v) => write!(f, "f(0) = {v}, expected 0"),
            KInfViolation::NotStrictlyIncreasing { r1, r2, f1, f2 } => write!(
                f,
                "not strictly increasing: f({r1}) = {f1} >= f({r2}) = {f2}"
            ),
            KInfViolation::Bounded { r, value } => {
                write!(f, "apparently bounded: f({r}) = {value}")
            }
        }
    }
}

/// Outcome of [`check_kinf`].
#[derive(Debug, Clone, PartialEq)]
pub struct KInfReport {
    pub violations: Vec<KInfViolation>,
}

impl KInfReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for KInfReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.passed() {
            return write!(f, "pass");
        }
        write!(f, "fail:")?;
        for v in &self.violations {
            write!(f, " {v};")?;
        }
        Ok(())
    }
}

const UNBOUNDED_PROBE: f64 = 1e6;
const UNBOUNDED_MIN: f64 = 1e3;

/// Samples the K∞ properties on `grid`, which must start at 0 and be
/// strictly increasing. Unboundedness is probed with a single far point.
pub fn check_kinf(f: &KInfFunction, grid: &[f64]) -> Result<KInfReport, KInfError> {
    if grid.is_empty() {
        return Err(KInfError::EmptyGrid);
    }
    if grid[0] != 0.0 || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(KInfError::BadGrid);
    }
    let mut violations = Vec::new();
    let f0 = f.apply(0.0);
    if f0 != 0.0 {
        violations.push(KInfViolation::NonzeroAtOrigin(f0));
    }
    for w in grid.windows(2) {
        let (f1, f2) = (f.apply(w[0]), f.apply(w[1]));
        if !(f1 < f2) {
            violations.push(KInfViolation::NotStrictlyIncreasing {
                r1: w[0],
                r2: w[1],
                f1,
                f2,
            });
        }
    }
    let far = f.apply(UNBOUNDED_PROBE);
    if !(far > UNBOUNDED_MIN) {
        violations.push(KInfViolation::Bounded {
            r: UNBOUNDED_PROBE,
            value: far,
        });
    }
    Ok(KInfReport { violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eval_examples() {
        assert_eq!(KInfFunction::linear(2.0).eval(0.0).unwrap(), 0.0);
        assert_eq!(KInfFunction::power(1.0, 2.0).eval(3.0).unwrap(), 9.0);
        let s = KInfFunction::sum(KInfFunction::linear(1.0), KInfFunction::power(0.5, 3.0));
        assert_eq!(s.eval(2.0).unwrap(), 6.0);
    }

    #[test]
    fn negative_argument_is_domain_error() {
        assert_eq!(
            KInfFunction::linear(1.0).eval(-1.0),
            Err(KInfError::NegativeArgument(-1.0))
        );
    }

    #[test]
    fn check_examples() {
        let r = check_kinf(&KInfFunction::linear(1.0), &[0.0, 1.0, 2.0]).unwrap();
        assert!(r.passed());
        let r = check_kinf(&KInfFunction::power(1.0, 1.5), &[0.0, 0.5, 1.0, 4.0]).unwrap();
        assert!(r.passed());
        let r = check_kinf(&KInfFunction::linear(0.0), &[0.0, 1.0, 2.0]).unwrap();
        assert!(!r.passed());
        assert!(r.to_string().contains("not strictly increasing"));
    }

    #[test]
    fn check_rejects_bad_grids() {
        let f = KInfFunction::linear(1.0);
        assert_eq!(check_kinf(&f, &[]), Err(KInfError::EmptyGrid));
        assert_eq!(check_kinf(&f, &[0.0, 2.0, 1.0]), Err(KInfError::BadGrid));
        assert_eq!(check_kinf(&f, &[1.0, 2.0]), Err(KInfError::BadGrid));
    }

    #[test]
    fn validate_rejects_sub_linear_power_and_zero_gain() {
        assert!(KInfFunction::power(1.0, 0.5).validate().is_err());
        assert!(KInfFunction::linear(0.0).validate().is_err());
        assert!(KInfFunction::sum(KInfFunction::linear(1.0), KInfFunction::linear(-1.0))
            .validate()
            .is_err());
        assert!(KInfFunction::power(2.0, 1.0).validate().is_ok());
    }

    #[test]
    fn serde_shape() {
        let f: KInfFunction = toml::from_str("kind = \"power\"\nc = 1.0\np = 2.0").unwrap();
        assert_eq!(f, KInfFunction::power(1.0, 2.0));
        assert!(toml::from_str::<KInfFunction>("kind = \"linear\"\nc = 1.0\nq = 2.0").is_err());
    }

    fn arb_kinf() -> impl Strategy<Value = KInfFunction> {
        let leaf = prop_oneof![
            (1e-3..1e3f64).prop_map(KInfFunction::linear),
            (1e-3..1e3f64, 1.0..4.0f64).prop_map(|(c, p)| KInfFunction::power(c, p)),
        ];
        leaf.prop_recursive(2, 4, 2, |inner| {
            (inner.clone(), inner).prop_map(|(a, b)| KInfFunction::sum(a, b))
        })
    }

    proptest! {
        #[test]
        fn positive_iff_nonzero(f in arb_kinf(), r in 0.0..1e3f64) {
            let v = f.eval(r).unwrap();
            prop_assert!(v >= 0.0);
            prop_assert_eq!(v == 0.0, r == 0.0);
        }

        #[test]
        fn strictly_monotone(f in arb_kinf(), a in 1e-3..1e2f64, d in 1e-3..1e2f64) {
            prop_assert!(f.eval(a).unwrap() < f.eval(a + d).unwrap());
        }
    }
}
