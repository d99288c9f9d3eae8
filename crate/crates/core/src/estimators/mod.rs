//! Point estimators and influence-function intervals.
//!
//! Every division whose numerator and denominator can both vanish goes through
//! [`ratio_or_zero`], which implements the `0/0 = 0` convention. With
//! same-sample empirical nuisances this makes the regression, weighting and
//! doubly robust estimators coincide with the plug-in estimator exactly.

mod first_order;
mod homogeneity;
mod second_order;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

pub use first_order::{dr_ate, influence_ci, ipw_ate, plugin_ate, plugin_psi0, plugin_psi1, reg_ate, Truncation};
pub use homogeneity::homogeneity_tau;
pub use second_order::{second_order_ate, second_order_eta, second_order_mean, second_order_rho, wate_hat, Arm};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::sampling::SufficientStats;

/// `num / den`, with `0/0 = 0`. Any zero denominator yields 0; callers that
/// can see a nonzero numerator over zero use [`checked_weight`] instead.
#[inline]
pub fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Like [`ratio_or_zero`] but rejects `x / 0` for `x != 0`.
#[inline]
pub(crate) fn checked_weight(num: f64, den: f64, category: usize) -> Result<f64> {
    if den != 0.0 {
        Ok(num / den)
    } else if num == 0.0 {
        Ok(0.0)
    } else {
        Err(Error::UndefinedWeight { category })
    }
}

/// Where a set of nuisance estimates came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NuisanceSource {
    /// Empirical averages from a sample.
    Empirical,
    /// Propensity and regressions set to zero; `p_hat` supplied separately.
    Zeroed,
    /// Supplied by the caller (e.g. the true model).
    External,
}

impl fmt::Display for NuisanceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NuisanceSource::Empirical => "empirical",
            NuisanceSource::Zeroed => "zeroed",
            NuisanceSource::External => "external",
        })
    }
}

/// Per-category nuisance values, dense over all `d` categories.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceEstimates {
    pub p_hat: Vec<f64>,
    pub pi_hat: Vec<f64>,
    pub mu1_hat: Vec<f64>,
    pub mu0_hat: Vec<f64>,
    pub source: NuisanceSource,
}

impl NuisanceEstimates {
    /// Validates shapes and `[0, 1]` ranges of caller-supplied values.
    pub fn external(p_hat: Vec<f64>, pi_hat: Vec<f64>, mu1_hat: Vec<f64>, mu0_hat: Vec<f64>) -> Result<Self> {
        let d = p_hat.len();
        if d == 0 {
            return Err(Error::InvalidInput("nuisances need d >= 1".into()));
        }
        for (name, v) in [("p_hat", &p_hat), ("pi_hat", &pi_hat), ("mu1_hat", &mu1_hat), ("mu0_hat", &mu0_hat)] {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: v.len() });
            }
            if let Some(k) = v.iter().position(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::InvalidInput(format!("{name}_{} = {} outside [0, 1]", k + 1, v[k])));
            }
        }
        Ok(Self { p_hat, pi_hat, mu1_hat, mu0_hat, source: NuisanceSource::External })
    }

    /// True population values of `model`.
    pub fn from_model(model: &ModelSpec) -> Self {
        Self {
            p_hat: model.p.clone(),
            pi_hat: model.pi.clone(),
            mu1_hat: model.mu1.clone(),
            mu0_hat: model.mu0.clone(),
            source: NuisanceSource::External,
        }
    }

    /// Propensity and regressions identically zero, with covariate masses `p_hat`.
    pub fn zeroed(p_hat: Vec<f64>) -> Result<Self> {
        let d = p_hat.len();
        let mut out = Self::external(p_hat, vec![0.0; d], vec![0.0; d], vec![0.0; d])?;
        out.source = NuisanceSource::Zeroed;
        Ok(out)
    }

    pub fn d(&self) -> usize {
        self.p_hat.len()
    }

    /// Outcome regression `E[Y | X = k] = pi_k mu1_k + (1 - pi_k) mu0_k`.
    #[inline]
    pub fn outcome_mean(&self, k: usize) -> f64 {
        self.pi_hat[k] * self.mu1_hat[k] + (1.0 - self.pi_hat[k]) * self.mu0_hat[k]
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if self.d() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: self.d() });
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: NuisanceFile =
            toml::from_str(text).map_err(|e| Error::Parse { path: "<nuisances>".into(), reason: e.to_string() })?;
        if file.p_hat.len() != file.d {
            return Err(Error::DimensionMismatch { expected: file.d, actual: file.p_hat.len() });
        }
        Self::external(file.p_hat, file.pi_hat, file.mu1_hat, file.mu0_hat)
    }

    pub fn to_toml_string(&self) -> String {
        let file = NuisanceFile {
            d: self.d(),
            p_hat: self.p_hat.clone(),
            pi_hat: self.pi_hat.clone(),
            mu1_hat: self.mu1_hat.clone(),
            mu0_hat: self.mu0_hat.clone(),
        };
        toml::to_string(&file).expect("nuisances serialize to toml")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { reason, .. } => Error::Parse { path: path.display().to_string(), reason },
            other => other,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NuisanceFile {
    d: usize,
    p_hat: Vec<f64>,
    pi_hat: Vec<f64>,
    mu1_hat: Vec<f64>,
    mu0_hat: Vec<f64>,
}

/// Empirical nuisances of a count table:
/// `pi = w/p`, `mu1 = q1/w`, `mu0 = q0/(p - w)`, each with `0/0 = 0`.
pub fn nuisance_mle(stats: &SufficientStats) -> NuisanceEstimates {
    let d = stats.d();
    let n = stats.n() as f64;
    let mut out = NuisanceEstimates {
        p_hat: vec![0.0; d],
        pi_hat: vec![0.0; d],
        mu1_hat: vec![0.0; d],
        mu0_hat: vec![0.0; d],
        source: NuisanceSource::Empirical,
    };
    for c in stats.cells() {
        let k = c.category as usize;
        out.p_hat[k] = c.total as f64 / n;
        out.pi_hat[k] = ratio_or_zero(c.treated as f64, c.total as f64);
        out.mu1_hat[k] = ratio_or_zero(c.treated_y1 as f64, c.treated as f64);
        out.mu0_hat[k] = ratio_or_zero(c.untreated_y1 as f64, c.untreated() as f64);
    }
    out
}

/// Estimator identities, named as on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorId {
    #[serde(rename = "plugin")]
    Plugin,
    #[serde(rename = "plugin_psi1")]
    PluginPsi1,
    #[serde(rename = "plugin_psi0")]
    PluginPsi0,
    #[serde(rename = "reg")]
    Reg,
    #[serde(rename = "ipw")]
    Ipw,
    #[serde(rename = "dr")]
    Dr,
    #[serde(rename = "homog")]
    Homog,
    #[serde(rename = "eta2")]
    Eta2,
    #[serde(rename = "rho2")]
    Rho2,
    #[serde(rename = "wate2")]
    Wate2,
    #[serde(rename = "ate2")]
    Ate2,
    #[serde(rename = "psi1_2")]
    Psi1Second,
    #[serde(rename = "psi0_2")]
    Psi0Second,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 13] = [
        EstimatorId::Plugin,
        EstimatorId::PluginPsi1,
        EstimatorId::PluginPsi0,
        EstimatorId::Reg,
        EstimatorId::Ipw,
        EstimatorId::Dr,
        EstimatorId::Homog,
        EstimatorId::Eta2,
        EstimatorId::Rho2,
        EstimatorId::Wate2,
        EstimatorId::Ate2,
        EstimatorId::Psi1Second,
        EstimatorId::Psi0Second,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorId::Plugin => "plugin",
            EstimatorId::PluginPsi1 => "plugin_psi1",
            EstimatorId::PluginPsi0 => "plugin_psi0",
            EstimatorId::Reg => "reg",
            EstimatorId::Ipw => "ipw",
            EstimatorId::Dr => "dr",
            EstimatorId::Homog => "homog",
            EstimatorId::Eta2 => "eta2",
            EstimatorId::Rho2 => "rho2",
            EstimatorId::Wate2 => "wate2",
            EstimatorId::Ate2 => "ate2",
            EstimatorId::Psi1Second => "psi1_2",
            EstimatorId::Psi0Second => "psi0_2",
        }
    }

    /// Second-order estimators need nuisances from an independent source.
    pub fn is_second_order(&self) -> bool {
        matches!(
            self,
            EstimatorId::Eta2
                | EstimatorId::Rho2
                | EstimatorId::Wate2
                | EstimatorId::Ate2
                | EstimatorId::Psi1Second
                | EstimatorId::Psi0Second
        )
    }

    /// Estimators computed from the count table alone.
    pub fn uses_counts_only(&self) -> bool {
        matches!(self, EstimatorId::Plugin | EstimatorId::PluginPsi1 | EstimatorId::PluginPsi0 | EstimatorId::Homog)
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown estimator {s:?}")))
    }
}

/// Two-sided interval at confidence `level`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl ConfidenceInterval {
    /// `value ± z_{(1+level)/2} · se`.
    pub fn normal(value: f64, se: f64, level: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidInput(format!("level must lie in (0, 1), got {level}")));
        }
        let z = Normal::standard().inverse_cdf((1.0 + level) / 2.0);
        Ok(Self { lower: value - z * se, upper: value + z * se, level })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub estimator: EstimatorId,
    pub value: f64,
    pub se: Option<f64>,
    pub ci: Option<ConfidenceInterval>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl EstimateResult {
    pub fn new(estimator: EstimatorId, value: f64) -> Self {
        Self { estimator, value, se: None, ci: None, diagnostics: BTreeMap::new() }
    }

    pub fn with_diagnostic(mut self, name: &str, value: f64) -> Self {
        self.diagnostics.insert(name.to_owned(), value);
        self
    }

    /// `key=value` lines: estimator, value, then se/ci when present, then
    /// diagnostics prefixed with `diag.`.
    pub fn to_key_value(&self) -> String {
        let mut out = format!("estimator={}\nvalue={}\n", self.estimator, fmt_real(self.value));
        if let Some(se) = self.se {
            out.push_str(&format!("se={}\n", fmt_real(se)));
        }
        if let Some(ci) = self.ci {
            out.push_str(&format!(
                "ci_lower={}\nci_upper={}\nlevel={}\n",
                fmt_real(ci.lower),
                fmt_real(ci.upper),
                fmt_real(ci.level)
            ));
        }
        for (k, v) in &self.diagnostics {
            out.push_str(&format!("diag.{k}={}\n", fmt_real(*v)));
        }
        out
    }
}

/// Shortest round-trip decimal, with negative zero printed as `0`.
pub fn fmt_real(x: f64) -> String {
    format!("{}", x + 0.0)
}
