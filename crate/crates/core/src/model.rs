//! Population model for a single categorical covariate with binary treatment
//! and binary outcome, together with its closed-form estimands.
//!
//! Category `k` (0-based internally) has mass `p[k]`, propensity `pi[k]` and arm
//! means `mu1[k]`, `mu0[k]`. Categories with `p[k] = 0` are allowed; their terms
//! vanish from every sum.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-12;

/// Population parameters `(p, pi, mu1, mu0)` over `d` categories.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub p: Vec<f64>,
    pub pi: Vec<f64>,
    pub mu1: Vec<f64>,
    pub mu0: Vec<f64>,
}

/// Positivity level `epsilon` of the model class: every propensity must lie in
/// `[epsilon, 1 - epsilon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelClassParams {
    epsilon: f64,
}

impl ModelClassParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::InvalidInput(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// One broken invariant of a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    LengthMismatch { field: &'static str, len: usize, d: usize },
    OutOfRange { field: &'static str, category: usize, value: f64 },
    SimplexSum { sum: f64 },
    BelowPositivity { category: usize, value: f64, epsilon: f64 },
    AbovePositivity { category: usize, value: f64, epsilon: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "d must be at least 1"),
            Violation::LengthMismatch { field, len, d } => {
                write!(f, "{field} has length {len}, expected {d}")
            }
            Violation::OutOfRange { field, category, value } => {
                write!(f, "{field}_{} = {value} outside [0, 1]", category + 1)
            }
            Violation::SimplexSum { sum } => write!(f, "sum(p) = {sum} != 1"),
            Violation::BelowPositivity { category, value, epsilon } => {
                write!(f, "pi_{} = {value} < epsilon = {epsilon}", category + 1)
            }
            Violation::AbovePositivity { category, value, epsilon } => {
                write!(f, "pi_{} = {value} > 1 - epsilon = {}", category + 1, 1.0 - epsilon)
            }
        }
    }
}

/// Outcome of [`validate_model`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Population estimands of a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct EstimandValues {
    /// Average treatment effect `psi1 - psi0`.
    pub psi: f64,
    pub psi1: f64,
    pub psi0: f64,
    /// Per-category effects `mu1 - mu0`.
    pub tau: Vec<f64>,
    /// Maximal effect heterogeneity `max_k |tau_k - psi|`.
    pub sigma_n: f64,
    /// Expected conditional covariance of treatment and outcome.
    pub eta: f64,
    /// Expected conditional variance of treatment.
    pub rho: f64,
    /// Variance-weighted effect `eta / rho` (0 when `rho = 0`).
    pub theta: f64,
}

/// Joint cell probabilities `w_k = P(X=k, A=1)`, `q1_k = P(X=k, A=1, Y=1)`,
/// `q0_k = P(X=k, A=0, Y=1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCellProbs {
    pub w: Vec<f64>,
    pub q1: Vec<f64>,
    pub q0: Vec<f64>,
}

impl ModelSpec {
    /// Builds a model, rejecting shape, range and simplex violations.
    /// Positivity is checked separately by [`validate_model`].
    pub fn new(p: Vec<f64>, pi: Vec<f64>, mu1: Vec<f64>, mu0: Vec<f64>) -> Result<Self> {
        let model = Self { p, pi, mu1, mu0 };
        model.check()?;
        Ok(model)
    }

    pub fn d(&self) -> usize {
        self.p.len()
    }

    /// Structural invariants: shapes, `[0, 1]` ranges and `sum(p) = 1`.
    pub fn structural_violations(&self) -> Vec<Violation> {
        let d = self.p.len();
        let mut out = Vec::new();
        if d == 0 {
            out.push(Violation::Empty);
            return out;
        }
        let fields: [(&'static str, &[f64]); 4] =
            [("p", &self.p), ("pi", &self.pi), ("mu1", &self.mu1), ("mu0", &self.mu0)];
        for (field, values) in fields {
            if values.len() != d {
                out.push(Violation::LengthMismatch { field, len: values.len(), d });
                continue;
            }
            for (category, &value) in values.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    out.push(Violation::OutOfRange { field, category, value });
                }
            }
        }
        let sum = compensated_sum(self.p.iter().copied());
        if !((sum - 1.0).abs() <= SIMPLEX_TOL) {
            out.push(Violation::SimplexSum { sum });
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let violations = self.structural_violations();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(violations))
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ModelFile =
            toml::from_str(text).map_err(|e| Error::Parse { path: "<model>".into(), reason: e.to_string() })?;
        if file.p.len() != file.d {
            return Err(Error::DimensionMismatch { expected: file.d, actual: file.p.len() });
        }
        Self::new(file.p, file.pi, file.mu1, file.mu0)
    }

    pub fn to_toml_string(&self) -> String {
        let file = ModelFile {
            d: self.d(),
            p: self.p.clone(),
            pi: self.pi.clone(),
            mu1: self.mu1.clone(),
            mu0: self.mu0.clone(),
        };
        toml::to_string(&file).expect("model serializes to toml")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { reason, .. } => Error::Parse { path: path.display().to_string(), reason },
            other => other,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    d: usize,
    p: Vec<f64>,
    pi: Vec<f64>,
    mu1: Vec<f64>,
    mu0: Vec<f64>,
}

/// Reports every structural and positivity violation of `model` in the class
/// with positivity level `params.epsilon()`.
pub fn validate_model(model: &ModelSpec, params: ModelClassParams) -> ValidationReport {
    let mut violations = model.structural_violations();
    let epsilon = params.epsilon();
    if model.pi.len() == model.d() {
        for (category, &value) in model.pi.iter().enumerate() {
            if value < epsilon {
                violations.push(Violation::BelowPositivity { category, value, epsilon });
            } else if value > 1.0 - epsilon {
                violations.push(Violation::AbovePositivity { category, value, epsilon });
            }
        }
    }
    ValidationReport { violations }
}

/// Closed-form estimands of a structurally valid model.
pub fn population_estimands(model: &ModelSpec) -> EstimandValues {
    let d = model.d();
    let psi1 = compensated_sum((0..d).map(|k| model.p[k] * model.mu1[k]));
    let psi0 = compensated_sum((0..d).map(|k| model.p[k] * model.mu0[k]));
    let psi = psi1 - psi0;
    let tau: Vec<f64> = (0..d).map(|k| model.mu1[k] - model.mu0[k]).collect();
    let sigma_n = tau.iter().map(|t| (t - psi).abs()).fold(0.0, f64::max);
    let var_a = |k: usize| model.p[k] * model.pi[k] * (1.0 - model.pi[k]);
    let eta = compensated_sum((0..d).map(|k| var_a(k) * tau[k]));
    let rho = compensated_sum((0..d).map(var_a));
    let theta = if rho > 0.0 { eta / rho } else { 0.0 };
    EstimandValues { psi, psi1, psi0, tau, sigma_n, eta, rho, theta }
}

pub fn joint_cell_probs(model: &ModelSpec) -> JointCellProbs {
    let d = model.d();
    let w = (0..d).map(|k| model.p[k] * model.pi[k]).collect();
    let q1 = (0..d).map(|k| model.p[k] * model.pi[k] * model.mu1[k]).collect();
    let q0 = (0..d).map(|k| model.p[k] * (1.0 - model.pi[k]) * model.mu0[k]).collect();
    JointCellProbs { w, q1, q0 }
}

/// Neumaier-compensated summation. Plain summation of `d = 10^7` equal masses
/// drifts by more than the simplex tolerance.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eps(e: f64) -> ModelClassParams {
        ModelClassParams::new(e).unwrap()
    }

    fn raw(p: Vec<f64>, pi: Vec<f64>, mu1: Vec<f64>, mu0: Vec<f64>) -> ModelSpec {
        ModelSpec { p, pi, mu1, mu0 }
    }

    #[test]
    fn interior_point_is_valid() {
        let m = raw(vec![1.0], vec![0.5], vec![0.3], vec![0.3]);
        assert!(validate_model(&m, eps(0.1)).is_valid());
    }

    #[test]
    fn positivity_breach_is_reported() {
        let m = raw(vec![1.0], vec![0.05], vec![0.3], vec![0.3]);
        let report = validate_model(&m, eps(0.1));
        assert_eq!(report.violations, vec![Violation::BelowPositivity { category: 0, value: 0.05, epsilon: 0.1 }]);
        assert_eq!(report.violations[0].to_string(), "pi_1 = 0.05 < epsilon = 0.1");
    }

    #[test]
    fn simplex_breach_is_reported() {
        let m = raw(vec![0.6, 0.5], vec![0.5; 2], vec![0.5; 2], vec![0.5; 2]);
        let report = validate_model(&m, eps(0.1));
        assert!(!report.is_valid());
        assert!(matches!(report.violations[0], Violation::SimplexSum { .. }));
        assert!(ModelSpec::new(m.p, m.pi, m.mu1, m.mu0).is_err());
    }

    #[test]
    fn epsilon_range_enforced() {
        assert!(ModelClassParams::new(0.0).is_err());
        assert!(ModelClassParams::new(0.5).is_err());
        assert!(ModelClassParams::new(0.25).is_ok());
    }

    #[test]
    fn large_uniform_simplex_passes_tolerance() {
        let d = 1_000_003;
        let p = vec![1.0 / d as f64; d];
        let m = raw(p, vec![0.5; d], vec![0.5; d], vec![0.25; d]);
        assert!(m.check().is_ok());
    }

    #[test]
    fn uniform_estimands() {
        for d in [1, 4, 37] {
            let m = raw(vec![1.0 / d as f64; d], vec![0.5; d], vec![0.5; d], vec![0.25; d]);
            let e = population_estimands(&m);
            assert!((e.psi - 0.25).abs() < 1e-12);
            assert!((e.eta - 1.0 / 16.0).abs() < 1e-12);
            assert!((e.rho - 0.25).abs() < 1e-12);
            assert!((e.theta - 0.25).abs() < 1e-12);
            assert!(e.sigma_n < 1e-12);
        }
    }

    #[test]
    fn null_effect_single_category() {
        let e = population_estimands(&raw(vec![1.0], vec![0.5], vec![0.3], vec![0.3]));
        assert_eq!(e.psi, 0.0);
        assert_eq!(e.sigma_n, 0.0);
    }

    #[test]
    fn opposite_effects_cancel() {
        let m = raw(vec![0.5, 0.5], vec![0.5, 0.5], vec![1.0, 0.0], vec![0.0, 1.0]);
        let e = population_estimands(&m);
        assert_eq!(e.psi, 0.0);
        assert_eq!(e.tau, vec![1.0, -1.0]);
        assert_eq!(e.sigma_n, 1.0);
        assert_eq!(e.eta, 0.0);
        assert_eq!(e.theta, 0.0);
    }

    #[test]
    fn theta_zero_when_treatment_is_deterministic() {
        let m = raw(vec![0.5, 0.5], vec![1.0, 0.0], vec![0.7, 0.2], vec![0.1, 0.4]);
        let e = population_estimands(&m);
        assert_eq!(e.rho, 0.0);
        assert_eq!(e.theta, 0.0);
    }

    #[test]
    fn joint_probs_uniform_d4() {
        let m = raw(vec![0.25; 4], vec![0.5; 4], vec![0.5; 4], vec![0.25; 4]);
        let j = joint_cell_probs(&m);
        assert!(j.w.iter().all(|&w| w == 0.125));
        assert!(j.q1.iter().all(|&q| q == 0.0625));
        assert!(j.q0.iter().all(|&q| q == 0.03125));
    }

    #[test]
    fn joint_probs_degenerate_cases() {
        let m = raw(vec![0.3, 0.7], vec![1.0, 1.0], vec![0.2, 0.9], vec![0.5, 0.5]);
        assert!(joint_cell_probs(&m).q0.iter().all(|&q| q == 0.0));
        let single = raw(vec![1.0], vec![0.5], vec![1.0], vec![0.0]);
        assert_eq!(joint_cell_probs(&single).q1, vec![0.5]);
    }

    #[test]
    fn toml_round_trip_and_dimension_check() {
        let m = raw(vec![0.25, 0.75], vec![0.5, 0.4], vec![0.1, 0.9], vec![0.0, 1.0]);
        let text = m.to_toml_string();
        assert!(text.contains("mu1"));
        assert_eq!(ModelSpec::from_toml_str(&text).unwrap(), m);
        let bad = "d = 3\np = [1.0]\npi = [0.5]\nmu1 = [0.5]\nmu0 = [0.5]\n";
        assert!(matches!(ModelSpec::from_toml_str(bad), Err(Error::DimensionMismatch { expected: 3, actual: 1 })));
    }
}
