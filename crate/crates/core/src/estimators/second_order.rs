//! Second-order U-statistic estimators.
//!
//! Each estimator is `P_n[f(Z)] - U_n[u(Z_1) 1{X_1 = X_2} v(Z_2) / p_hat(X_1)]`
//! (the arm-mean estimators fold the sign into `u`). The pair sum is computed
//! per category with
//! `sum_{i != j} u_i v_j 1{X_i = X_j} = sum_k (S^u_k S^v_k - sum_{X_i = k} u_i v_i)`,
//! which costs `O(n log n)` instead of `O(n^2)`.

use super::{EstimateResult, EstimatorId, NuisanceEstimates};
use crate::error::{Error, Result};
use crate::model::ModelClassParams;
use crate::sampling::{Dataset, Record};

/// Treatment arm of a potential-outcome mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Treated,
    Control,
}

/// Per-record values entering a second-order estimator.
struct Terms {
    linear: f64,
    u: f64,
    v: f64,
}

struct SecondOrder {
    linear_mean: f64,
    pair_mean: f64,
    observed: usize,
    tied_pairs: f64,
}

/// `(1/n) sum linear_i` and `(1/(n(n-1))) sum_{i != j, X_i = X_j} u_i v_j / p_hat(X_i)`.
fn second_order(
    data: &Dataset,
    nuis: &NuisanceEstimates,
    terms: impl Fn(&Record) -> Result<Terms>,
) -> Result<SecondOrder> {
    let n = data.n();
    if n < 2 {
        return Err(Error::TooFewRecords { required: 2, actual: n });
    }
    nuis.check_dim(data.d())?;
    let mut rows: Vec<(u32, f64, f64)> = Vec::with_capacity(n);
    let mut linear = 0.0;
    for r in data.records() {
        let t = terms(r)?;
        linear += t.linear;
        rows.push((r.x, t.u, t.v));
    }
    rows.sort_by_key(|row| row.0);

    let mut pair_sum = 0.0;
    let mut observed = 0usize;
    let mut tied_pairs = 0.0;
    for group in rows.chunk_by(|a, b| a.0 == b.0) {
        let k = group[0].0 as usize;
        let p_hat = nuis.p_hat[k];
        if p_hat <= 0.0 {
            return Err(Error::MissingCovariateMass { category: k });
        }
        observed += 1;
        if group.len() < 2 {
            continue;
        }
        let (mut su, mut sv, mut suv) = (0.0, 0.0, 0.0);
        for &(_, u, v) in group {
            su += u;
            sv += v;
            suv += u * v;
        }
        pair_sum += (su * sv - suv) / p_hat;
        tied_pairs += (group.len() * (group.len() - 1)) as f64;
    }
    let nf = n as f64;
    Ok(SecondOrder { linear_mean: linear / nf, pair_mean: pair_sum / (nf * (nf - 1.0)), observed, tied_pairs })
}

fn finish(id: EstimatorId, value: f64, parts: &SecondOrder) -> EstimateResult {
    EstimateResult::new(id, value)
        .with_diagnostic("first_order_term", parts.linear_mean)
        .with_diagnostic("u_statistic_term", value - parts.linear_mean)
        .with_diagnostic("observed_categories", parts.observed as f64)
        .with_diagnostic("tied_ordered_pairs", parts.tied_pairs)
}

/// Second-order estimator of the expected conditional covariance
/// `E[Cov(Y, A | X)]`. `mu_hat` is the outcome regression `E[Y | X]` implied
/// by the nuisances (identically zero for zeroed nuisances).
pub fn second_order_eta(data: &Dataset, nuis: &NuisanceEstimates) -> Result<EstimateResult> {
    let parts = second_order(data, nuis, |r| {
        let k = r.category();
        let u = r.a_f64() - nuis.pi_hat[k];
        let v = r.y_f64() - nuis.outcome_mean(k);
        Ok(Terms { linear: u * v, u, v })
    })?;
    Ok(finish(EstimatorId::Eta2, parts.linear_mean - parts.pair_mean, &parts))
}

/// Second-order estimator of the expected conditional treatment variance
/// `E[Var(A | X)]`.
pub fn second_order_rho(data: &Dataset, nuis: &NuisanceEstimates) -> Result<EstimateResult> {
    let parts = second_order(data, nuis, |r| {
        let u = r.a_f64() - nuis.pi_hat[r.category()];
        Ok(Terms { linear: u * u, u, v: u })
    })?;
    Ok(finish(EstimatorId::Rho2, parts.linear_mean - parts.pair_mean, &parts))
}

/// Variance-weighted effect `eta_hat / rho_hat`. With `clamp`, the
/// denominator is floored at `eps (1 - eps)`; otherwise `rho_hat` must be positive.
pub fn wate_hat(eta_hat: f64, rho_hat: f64, params: ModelClassParams, clamp: bool) -> Result<EstimateResult> {
    if !eta_hat.is_finite() || !rho_hat.is_finite() {
        return Err(Error::InvalidInput("eta_hat and rho_hat must be finite".into()));
    }
    let eps = params.epsilon();
    let denominator = if clamp {
        rho_hat.max(eps * (1.0 - eps))
    } else if rho_hat > 0.0 {
        rho_hat
    } else {
        return Err(Error::NonPositiveDenominator(rho_hat));
    };
    Ok(EstimateResult::new(EstimatorId::Wate2, eta_hat / denominator)
        .with_diagnostic("eta_hat", eta_hat)
        .with_diagnostic("rho_hat", rho_hat)
        .with_diagnostic("denominator", denominator))
}

/// Second-order estimator of the potential-outcome mean `E[Y^a]`.
///
/// For the treated arm, `P_n[A(Y - mu1)/pi + mu1]` plus the U-statistic with
/// kernel `-(A_1/pi_1 - 1) 1{X_1 = X_2} A_2 (Y_2 - mu1_2) / (p_1 pi_2)`; the
/// control arm swaps `A -> 1 - A`, `pi -> 1 - pi`, `mu1 -> mu0`.
pub fn second_order_mean(data: &Dataset, nuis: &NuisanceEstimates, arm: Arm) -> Result<EstimateResult> {
    let parts = second_order(data, nuis, |r| {
        let k = r.category();
        let (indicator, propensity, mu) = match arm {
            Arm::Treated => (r.a_f64(), nuis.pi_hat[k], nuis.mu1_hat[k]),
            Arm::Control => (1.0 - r.a_f64(), 1.0 - nuis.pi_hat[k], nuis.mu0_hat[k]),
        };
        if propensity <= 0.0 {
            return Err(Error::DegeneratePropensity { category: k });
        }
        let residual = indicator * (r.y_f64() - mu) / propensity;
        Ok(Terms { linear: residual + mu, u: indicator / propensity - 1.0, v: residual })
    })?;
    let id = match arm {
        Arm::Treated => EstimatorId::Psi1Second,
        Arm::Control => EstimatorId::Psi0Second,
    };
    Ok(finish(id, parts.linear_mean - parts.pair_mean, &parts))
}

/// Second-order ATE: treated-arm minus control-arm second-order means.
pub fn second_order_ate(data: &Dataset, nuis: &NuisanceEstimates) -> Result<EstimateResult> {
    let treated = second_order_mean(data, nuis, Arm::Treated)?;
    let control = second_order_mean(data, nuis, Arm::Control)?;
    let mut out = EstimateResult::new(EstimatorId::Ate2, treated.value - control.value)
        .with_diagnostic("psi1_hat", treated.value)
        .with_diagnostic("psi0_hat", control.value);
    if let Some(&k) = treated.diagnostics.get("observed_categories") {
        out = out.with_diagnostic("observed_categories", k);
    }
    Ok(out)
}
