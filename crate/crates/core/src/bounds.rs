//! Closed-form bias, variance and probability bounds.
//!
//! Bounds with explicit constants are reported as certified. Rates whose
//! constants are only known up to an absolute factor are exposed as templates
//! `C * rate` with a caller-supplied `C` and are never marked certified.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{compensated_sum, ModelClassParams, ModelSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: &'static str,
    pub value: f64,
    pub inputs: BTreeMap<&'static str, f64>,
    /// `false` for rate templates with a user-chosen constant.
    pub certified: bool,
    /// The bound is trivially implied (e.g. a probability bound of at least 1).
    pub vacuous: bool,
}

impl BoundReport {
    fn new(name: &'static str, value: f64, inputs: &[(&'static str, f64)], certified: bool) -> Self {
        Self { name, value, inputs: inputs.iter().copied().collect(), certified, vacuous: false }
    }

    fn vacuous_above(mut self, threshold: f64) -> Self {
        self.vacuous = self.value >= threshold;
        self
    }
}

/// Exact bias of the plug-in arm means and ATE at sample size `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactBias {
    pub psi1: f64,
    pub psi0: f64,
    pub psi: f64,
}

/// Exact finite-sample bias of the plug-in estimators. Each term is the
/// probability that a category has no unit in the relevant arm, times its
/// contribution to the arm mean.
pub fn exact_bias(model: &ModelSpec, n: usize) -> Result<ExactBias> {
    model.check()?;
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let m = (n - 1) as i32;
    let d = model.d();
    let psi1 = -compensated_sum((0..d).map(|k| {
        let (p, pi) = (model.p[k], model.pi[k]);
        model.mu1[k] * p * (1.0 - pi) * (1.0 - p * pi).powi(m)
    }));
    let psi0 = -compensated_sum((0..d).map(|k| {
        let (p, pi) = (model.p[k], model.pi[k]);
        model.mu0[k] * p * pi * (1.0 - p + p * pi).powi(m)
    }));
    Ok(ExactBias { psi1, psi0, psi: psi1 - psi0 })
}

/// Brackets on the worst-case bias of the plug-in treated-arm mean over the
/// positivity class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCaseBias {
    pub lower_exp: f64,
    pub upper: f64,
    /// Only available when `n >= 1 + 1/eps`.
    pub lower_linear: Option<f64>,
}

pub fn worst_case_bias_bounds(params: ModelClassParams, n: usize, d: usize) -> Result<WorstCaseBias> {
    check_nd(n, d)?;
    let eps = params.epsilon();
    let (nf, df) = (n as f64, d as f64);
    let lower_exp = (1.0 - eps) * (-eps * (nf - 1.0) / (df - eps)).exp();
    let upper = (1.0 - eps) / eps * df / nf;
    let lower_linear = (nf >= 1.0 + 1.0 / eps).then(|| (1.0 - eps) / 8.0 * ((df - 1.0) / (eps * (nf - 1.0))).min(1.0));
    Ok(WorstCaseBias { lower_exp, upper, lower_linear })
}

/// Explicit variance bound for the plug-in treated-arm mean:
/// `(1 + 7/(2 eps))/n + 4/n + 2/(n-1)`.
pub fn plugin_variance_bound(params: ModelClassParams, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewRecords { required: 2, actual: n });
    }
    let eps = params.epsilon();
    let nf = n as f64;
    Ok((1.0 + 7.0 / (2.0 * eps)) / nf + 4.0 / nf + 2.0 / (nf - 1.0))
}

/// MSE bound for the plug-in treated-arm mean: squared worst-case bias upper
/// bound plus [`plugin_variance_bound`].
pub fn plugin_mse_bound(params: ModelClassParams, n: usize, d: usize) -> Result<f64> {
    let bias = worst_case_bias_bounds(params, n, d)?.upper;
    Ok(bias * bias + plugin_variance_bound(params, n)?)
}

/// Constants of the no-collision tail bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionConstants {
    pub c1: f64,
    pub c2: f64,
    pub c: f64,
}

/// `C1 = -log(e^{-eps^2} + e^{-eps(1-eps)} - e^{-eps})`, `C2 = C1 eps / (2 log 2)`,
/// `C = min(C2/2, eps/12)`.
pub fn collision_constants(params: ModelClassParams) -> CollisionConstants {
    let eps = params.epsilon();
    let c1 = -((-eps * eps).exp() + (-eps * (1.0 - eps)).exp() - (-eps).exp()).ln();
    let c2 = c1 * eps / (2.0 * std::f64::consts::LN_2);
    CollisionConstants { c1, c2, c: (c2 / 2.0).min(eps / 12.0) }
}

/// Upper bound on the probability that no category contains both a treated
/// and an untreated unit: `2 exp(-C n^2 / max(n, d))`.
pub fn no_collision_bound(params: ModelClassParams, n: usize, d: usize) -> Result<f64> {
    check_nd(n, d)?;
    let c = collision_constants(params).c;
    let nf = n as f64;
    Ok(2.0 * (-c * nf * nf / nf.max(d as f64)).exp())
}

/// Bias bound for the homogeneity estimator: `sigma_n + no_collision_bound`.
pub fn homogeneity_bias_bound(sigma_n: f64, params: ModelClassParams, n: usize, d: usize) -> Result<f64> {
    if !(0.0..=2.0).contains(&sigma_n) {
        return Err(Error::InvalidInput(format!("sigma_n must lie in [0, 2], got {sigma_n}")));
    }
    Ok(sigma_n + no_collision_bound(params, n, d)?)
}

/// Benchmark RMSE curve `C n^{gamma/2 - 1}` (i.e. `C sqrt(d/n^2)` at `d = n^gamma`).
pub fn rate_curve(c: f64, gamma: f64, n: usize) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!("rate constant must be positive, got {c}")));
    }
    Ok(c * (n as f64).powf(gamma / 2.0 - 1.0))
}

/// Variance rate template for the homogeneity estimator:
/// `C (sigma_n^2 + exp(-C(eps) n^2 / max(n, d)) + max(n, d)/n^2)`, using the
/// no-collision exponent constant for the exponential term. Not certified.
pub fn homogeneity_variance_rate(c: f64, sigma_n: f64, params: ModelClassParams, n: usize, d: usize) -> Result<f64> {
    check_nd(n, d)?;
    check_constant(c)?;
    let (nf, m) = (n as f64, (n as f64).max(d as f64));
    let exponent = collision_constants(params).c;
    Ok(c * (sigma_n * sigma_n + (-exponent * nf * nf / m).exp() + m / (nf * nf)))
}

/// How the second-order estimators' propensity and regression nuisances were formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecondOrderNuisance {
    Empirical,
    Zeroed,
}

/// MSE rate template for the second-order covariance/variance estimators:
/// `C (xi^2 min(d, n)/n + d/n^2 + 1/n)` with empirical nuisances and
/// `C (xi^2 + d/n^2 + 1/n)` with zeroed ones. `xi` is the uniform relative
/// error `max_k |1 - p_k / p_hat_k|` of the covariate masses. Not certified.
pub fn second_order_mse_rate(c: f64, xi: f64, n: usize, d: usize, nuisance: SecondOrderNuisance) -> Result<f64> {
    check_nd(n, d)?;
    check_constant(c)?;
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::InvalidInput(format!("xi must lie in [0, 1), got {xi}")));
    }
    let (nf, df) = (n as f64, d as f64);
    let xi_term = match nuisance {
        SecondOrderNuisance::Empirical => xi * xi * df.min(nf) / nf,
        SecondOrderNuisance::Zeroed => xi * xi,
    };
    Ok(c * (xi_term + df / (nf * nf) + 1.0 / nf))
}

/// Uniform relative error `max_k |1 - p_k / p_hat_k|` over categories with `p_hat_k > 0`.
pub fn covariate_relative_error(p: &[f64], p_hat: &[f64]) -> Result<f64> {
    if p.len() != p_hat.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), actual: p_hat.len() });
    }
    Ok(p.iter().zip(p_hat).filter(|(_, &q)| q > 0.0).map(|(&p, &q)| (1.0 - p / q).abs()).fold(0.0, f64::max))
}

/// Inputs for a full bound table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundQuery {
    pub epsilon: f64,
    pub n: usize,
    pub d: usize,
    pub sigma_n: Option<f64>,
    /// Constant for the rate templates (default 1).
    pub constant: f64,
    pub gamma: Option<f64>,
    pub xi: f64,
}

/// Every bound evaluable at `query`, in a fixed order.
pub fn bound_table(query: &BoundQuery) -> Result<Vec<BoundReport>> {
    let params = ModelClassParams::new(query.epsilon)?;
    let (n, d, nf, df) = (query.n, query.d, query.n as f64, query.d as f64);
    let base = [("epsilon", query.epsilon), ("n", nf), ("d", df)];
    let mut out = Vec::new();

    let wc = worst_case_bias_bounds(params, n, d)?;
    out.push(BoundReport::new("worst_case_bias_lower_exp", wc.lower_exp, &base, true));
    out.push(BoundReport::new("worst_case_bias_upper", wc.upper, &base, true).vacuous_above(1.0));
    if let Some(lin) = wc.lower_linear {
        out.push(BoundReport::new("worst_case_bias_lower_linear", lin, &base, true));
    }
    if n >= 2 {
        out.push(
            BoundReport::new("plugin_variance_bound", plugin_variance_bound(params, n)?, &[base[0], base[1]], true)
                .vacuous_above(1.0),
        );
        out.push(BoundReport::new("plugin_mse_bound", plugin_mse_bound(params, n, d)?, &base, true).vacuous_above(1.0));
    }
    let cc = collision_constants(params);
    out.push(BoundReport::new("collision_constant_c1", cc.c1, &base[..1], true));
    out.push(BoundReport::new("collision_constant_c2", cc.c2, &base[..1], true));
    out.push(BoundReport::new("collision_constant_c", cc.c, &base[..1], true));
    out.push(BoundReport::new("no_collision_bound", no_collision_bound(params, n, d)?, &base, true).vacuous_above(1.0));

    let sigma = query.sigma_n.unwrap_or(0.0);
    if let Some(s) = query.sigma_n {
        let inputs = [base[0], base[1], base[2], ("sigma_n", s)];
        out.push(
            BoundReport::new("homogeneity_bias_bound", homogeneity_bias_bound(s, params, n, d)?, &inputs, true)
                .vacuous_above(2.0),
        );
    }
    let c = query.constant;
    let templ = [base[0], base[1], base[2], ("sigma_n", sigma), ("C", c)];
    out.push(BoundReport::new(
        "homogeneity_variance_rate",
        homogeneity_variance_rate(c, sigma, params, n, d)?,
        &templ,
        false,
    ));
    let templ = [base[1], base[2], ("xi", query.xi), ("C", c)];
    out.push(BoundReport::new(
        "second_order_mse_rate_zeroed",
        second_order_mse_rate(c, query.xi, n, d, SecondOrderNuisance::Zeroed)?,
        &templ,
        false,
    ));
    out.push(BoundReport::new(
        "second_order_mse_rate_empirical",
        second_order_mse_rate(c, query.xi, n, d, SecondOrderNuisance::Empirical)?,
        &templ,
        false,
    ));
    if let Some(g) = query.gamma {
        out.push(BoundReport::new("rate_curve", rate_curve(c, g, n)?, &[base[1], ("gamma", g), ("C", c)], false));
    }
    Ok(out)
}

/// Renders reports as `name,value,certified,vacuous,inputs` rows; inputs are
/// `key=value` pairs joined by `;`.
pub fn format_bound_table(reports: &[BoundReport]) -> String {
    let mut out = String::from("name,value,certified,vacuous,inputs\n");
    for r in reports {
        let inputs = r.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";");
        out.push_str(&format!("{},{},{},{},{}\n", r.name, r.value, r.certified, r.vacuous, inputs));
    }
    out
}

fn check_nd(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput(format!("n and d must be positive, got n = {n}, d = {d}")));
    }
    Ok(())
}

fn check_constant(c: f64) -> Result<()> {
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!("rate constant must be positive, got {c}")));
    }
    Ok(())
}
