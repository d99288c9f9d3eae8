use super::{checked_weight, ratio_or_zero, ConfidenceInterval, EstimateResult, EstimatorId, NuisanceEstimates};
use crate::error::{Error, Result};
use crate::sampling::{Dataset, Record, SufficientStats};

/// Optional clamping of propensities to `[eps, 1 - eps]` in IPW and DR.
///
/// Clamping breaks the exact agreement of IPW/DR with the plug-in estimator,
/// so it is off by default.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Truncation {
    #[default]
    None,
    At(f64),
}

impl Truncation {
    #[inline]
    fn apply(self, pi: f64) -> f64 {
        match self {
            Truncation::None => pi,
            Truncation::At(eps) => pi.clamp(eps, 1.0 - eps),
        }
    }
}

struct PluginParts {
    psi1: f64,
    psi0: f64,
    no_treated: usize,
    no_control: usize,
    observed: usize,
}

fn plugin_parts(stats: &SufficientStats) -> PluginParts {
    let n = stats.n() as f64;
    let mut parts = PluginParts { psi1: 0.0, psi0: 0.0, no_treated: 0, no_control: 0, observed: 0 };
    for c in stats.cells() {
        let p_hat = c.total as f64 / n;
        parts.psi1 += p_hat * ratio_or_zero(c.treated_y1 as f64, c.treated as f64);
        parts.psi0 += p_hat * ratio_or_zero(c.untreated_y1 as f64, c.untreated() as f64);
        parts.no_treated += (c.treated == 0) as usize;
        parts.no_control += (c.untreated() == 0) as usize;
        parts.observed += 1;
    }
    parts
}

fn with_counts(r: EstimateResult, parts: &PluginParts) -> EstimateResult {
    r.with_diagnostic("observed_categories", parts.observed as f64)
        .with_diagnostic("categories_without_treated", parts.no_treated as f64)
        .with_diagnostic("categories_without_control", parts.no_control as f64)
}

/// Plug-in ATE `sum_k p_hat_k (mu1_hat_k - mu0_hat_k)`.
///
/// The diagnostics count the categories where one arm is empty, i.e. where
/// the `0/0 = 0` convention kicked in.
pub fn plugin_ate(stats: &SufficientStats) -> EstimateResult {
    let parts = plugin_parts(stats);
    with_counts(EstimateResult::new(EstimatorId::Plugin, parts.psi1 - parts.psi0), &parts)
}

/// Plug-in estimate of the treated-arm mean `E[Y^1]`.
pub fn plugin_psi1(stats: &SufficientStats) -> EstimateResult {
    let parts = plugin_parts(stats);
    with_counts(EstimateResult::new(EstimatorId::PluginPsi1, parts.psi1), &parts)
}

/// Plug-in estimate of the control-arm mean `E[Y^0]`.
pub fn plugin_psi0(stats: &SufficientStats) -> EstimateResult {
    let parts = plugin_parts(stats);
    with_counts(EstimateResult::new(EstimatorId::PluginPsi0, parts.psi0), &parts)
}

fn sample_mean(data: &Dataset, nuis: &NuisanceEstimates, mut term: impl FnMut(&Record) -> Result<f64>) -> Result<f64> {
    nuis.check_dim(data.d())?;
    let mut sum = 0.0;
    for r in data.records() {
        sum += term(r)?;
    }
    Ok(sum / data.n() as f64)
}

/// Outcome-regression estimator `P_n[mu1_hat(X) - mu0_hat(X)]`.
pub fn reg_ate(data: &Dataset, nuis: &NuisanceEstimates) -> Result<EstimateResult> {
    let value = sample_mean(data, nuis, |r| {
        let k = r.category();
        Ok(nuis.mu1_hat[k] - nuis.mu0_hat[k])
    })?;
    Ok(EstimateResult::new(EstimatorId::Reg, value))
}

/// Inverse-propensity-weighted estimator `P_n[AY/pi - (1-A)Y/(1-pi)]`.
pub fn ipw_ate(data: &Dataset, nuis: &NuisanceEstimates, truncation: Truncation) -> Result<EstimateResult> {
    let value = sample_mean(data, nuis, |r| {
        let k = r.category();
        let pi = truncation.apply(nuis.pi_hat[k]);
        let (a, y) = (r.a_f64(), r.y_f64());
        Ok(checked_weight(a * y, pi, k)? - checked_weight((1.0 - a) * y, 1.0 - pi, k)?)
    })?;
    Ok(EstimateResult::new(EstimatorId::Ipw, value))
}

/// Estimated efficient influence function of the ATE at one record.
#[inline]
fn dr_term(r: &Record, nuis: &NuisanceEstimates, truncation: Truncation) -> Result<f64> {
    let k = r.category();
    let pi = truncation.apply(nuis.pi_hat[k]);
    let (mu1, mu0) = (nuis.mu1_hat[k], nuis.mu0_hat[k]);
    let (a, y) = (r.a_f64(), r.y_f64());
    Ok(checked_weight(a * (y - mu1), pi, k)? + mu1 - checked_weight((1.0 - a) * (y - mu0), 1.0 - pi, k)? - mu0)
}

/// Doubly robust (AIPW) estimator.
pub fn dr_ate(data: &Dataset, nuis: &NuisanceEstimates, truncation: Truncation) -> Result<EstimateResult> {
    let value = sample_mean(data, nuis, |r| dr_term(r, nuis, truncation))?;
    Ok(EstimateResult::new(EstimatorId::Dr, value))
}

/// DR point estimate with a Wald interval from the empirical influence
/// function: `se = sd(phi_hat) / sqrt(n)` with the `n - 1` sample variance.
pub fn influence_ci(data: &Dataset, nuis: &NuisanceEstimates, level: f64) -> Result<EstimateResult> {
    let n = data.n();
    if n < 2 {
        return Err(Error::TooFewRecords { required: 2, actual: n });
    }
    nuis.check_dim(data.d())?;
    let phi = data.records().iter().map(|r| dr_term(r, nuis, Truncation::None)).collect::<Result<Vec<f64>>>()?;
    let mean = phi.iter().sum::<f64>() / n as f64;
    let var = phi.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let mut out = EstimateResult::new(EstimatorId::Dr, mean);
    out.se = Some(se);
    out.ci = Some(ConfidenceInterval::normal(mean, se, level)?);
    Ok(out)
}
