//! One entry point that runs any estimator with a chosen nuisance source.
//! Shared by the Monte Carlo harness and the command line.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    dr_ate, homogeneity_tau, influence_ci, ipw_ate, nuisance_mle, plugin_ate, plugin_psi0, plugin_psi1, reg_ate,
    second_order_ate, second_order_eta, second_order_mean, second_order_rho, wate_hat, Arm, ConfidenceInterval,
    EstimateResult, EstimatorId, NuisanceEstimates, Truncation,
};
use crate::model::ModelClassParams;
use crate::sampling::{split_sample, tabulate, Dataset, SeedSpec};

/// How nuisances are obtained, by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NuisanceMode {
    /// Empirical averages from the same sample that is averaged over.
    Empirical,
    /// Empirical averages from one random half, estimator evaluated on the other.
    Split,
    /// Propensity and regressions zero, covariate masses supplied.
    Zero,
    /// True model values (simulation) or a nuisance file (command line).
    #[serde(alias = "file", alias = "external")]
    Truth,
}

impl NuisanceMode {
    pub fn name(&self) -> &'static str {
        match self {
            NuisanceMode::Empirical => "empirical",
            NuisanceMode::Split => "split",
            NuisanceMode::Zero => "zero",
            NuisanceMode::Truth => "truth",
        }
    }

    /// Whether `estimator` accepts nuisances from this source.
    pub fn supports(&self, estimator: EstimatorId) -> bool {
        if estimator.uses_counts_only() {
            return *self == NuisanceMode::Empirical;
        }
        if estimator.is_second_order() {
            return *self != NuisanceMode::Empirical;
        }
        true
    }
}

impl fmt::Display for NuisanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NuisanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(NuisanceMode::Empirical),
            "split" => Ok(NuisanceMode::Split),
            "zero" | "zeroed" => Ok(NuisanceMode::Zero),
            "truth" | "file" | "external" => Ok(NuisanceMode::Truth),
            other => Err(Error::InvalidInput(format!("unknown nuisance mode {other:?}"))),
        }
    }
}

/// Resolved nuisance source for one estimation.
#[derive(Debug, Clone, Copy)]
pub enum NuisancePlan<'a> {
    Empirical,
    /// Split with this seed; nuisances come from the second half.
    Split(SeedSpec),
    /// Caller-supplied nuisances (zeroed, external or true values).
    Fixed(&'a NuisanceEstimates),
}

#[derive(Debug, Clone, Copy)]
pub struct EstimationRequest<'a> {
    pub estimator: EstimatorId,
    pub nuisance: NuisancePlan<'a>,
    /// Floor for the variance-weighted effect denominator; `None` means unclamped.
    pub wate_clamp: Option<ModelClassParams>,
    /// Attach an influence-function interval at this level (first-order ATE estimators only).
    pub level: Option<f64>,
    pub truncation: Truncation,
}

impl<'a> EstimationRequest<'a> {
    pub fn new(estimator: EstimatorId, nuisance: NuisancePlan<'a>) -> Self {
        Self { estimator, nuisance, wate_clamp: None, level: None, truncation: Truncation::None }
    }
}

/// Runs one estimator on `data`.
pub fn run_estimator(data: &Dataset, req: &EstimationRequest<'_>) -> Result<EstimateResult> {
    let id = req.estimator;
    if id.uses_counts_only() && !matches!(req.nuisance, NuisancePlan::Empirical) {
        return Err(Error::InvalidInput(format!("{id} uses same-sample counts only")));
    }
    if id.is_second_order() && matches!(req.nuisance, NuisancePlan::Empirical) {
        return Err(Error::InvalidInput(format!("{id} needs nuisances from an independent source")));
    }

    let split;
    let owned;
    let (est_data, nuis): (&Dataset, Option<&NuisanceEstimates>) = match req.nuisance {
        NuisancePlan::Empirical if id.uses_counts_only() => (data, None),
        NuisancePlan::Empirical => {
            owned = nuisance_mle(&tabulate(data));
            (data, Some(&owned))
        }
        NuisancePlan::Split(seed) => {
            split = split_sample(data, seed)?;
            owned = nuisance_mle(&tabulate(&split.1));
            (&split.0, Some(&owned))
        }
        NuisancePlan::Fixed(n) => (data, Some(n)),
    };

    let mut result = match (id, nuis) {
        (EstimatorId::Plugin, _) => plugin_ate(&tabulate(est_data)),
        (EstimatorId::PluginPsi1, _) => plugin_psi1(&tabulate(est_data)),
        (EstimatorId::PluginPsi0, _) => plugin_psi0(&tabulate(est_data)),
        (EstimatorId::Homog, _) => homogeneity_tau(&tabulate(est_data)),
        (_, None) => unreachable!("nuisances resolved for every non-count estimator"),
        (EstimatorId::Reg, Some(nu)) => reg_ate(est_data, nu)?,
        (EstimatorId::Ipw, Some(nu)) => ipw_ate(est_data, nu, req.truncation)?,
        (EstimatorId::Dr, Some(nu)) => dr_ate(est_data, nu, req.truncation)?,
        (EstimatorId::Eta2, Some(nu)) => second_order_eta(est_data, nu)?,
        (EstimatorId::Rho2, Some(nu)) => second_order_rho(est_data, nu)?,
        (EstimatorId::Wate2, Some(nu)) => {
            let eta = second_order_eta(est_data, nu)?.value;
            let rho = second_order_rho(est_data, nu)?.value;
            match req.wate_clamp {
                Some(params) => wate_hat(eta, rho, params, true)?,
                None => wate_hat(eta, rho, ModelClassParams::new(0.25)?, false)?,
            }
        }
        (EstimatorId::Ate2, Some(nu)) => second_order_ate(est_data, nu)?,
        (EstimatorId::Psi1Second, Some(nu)) => second_order_mean(est_data, nu, Arm::Treated)?,
        (EstimatorId::Psi0Second, Some(nu)) => second_order_mean(est_data, nu, Arm::Control)?,
    };

    if let Some(level) = req.level {
        if !matches!(id, EstimatorId::Plugin | EstimatorId::Reg | EstimatorId::Ipw | EstimatorId::Dr) {
            return Err(Error::InvalidInput(format!("intervals are available for plugin, reg, ipw and dr, not {id}")));
        }
        let empirical;
        let nu = match nuis {
            Some(nu) => nu,
            None => {
                empirical = nuisance_mle(&tabulate(est_data));
                &empirical
            }
        };
        let se = influence_ci(est_data, nu, level)?.se.expect("influence_ci sets se");
        result.se = Some(se);
        result.ci = Some(ConfidenceInterval::normal(result.value, se, level)?);
    }
    result.diagnostics.insert("n_used".into(), est_data.n() as f64);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{draw_dataset, uniform_sim_model, Record};

    fn d1() -> Dataset {
        let rows = [(1, 1, 1), (1, 0, 0), (2, 1, 0), (2, 0, 1)];
        Dataset::new(2, rows.iter().map(|&(x, a, y)| Record::from_one_based(x, a, y)).collect()).unwrap()
    }

    #[test]
    fn incompatible_plans_rejected() {
        let nu = NuisanceEstimates::zeroed(vec![0.5, 0.5]).unwrap();
        let req = EstimationRequest::new(EstimatorId::Plugin, NuisancePlan::Fixed(&nu));
        assert!(run_estimator(&d1(), &req).is_err());
        let req = EstimationRequest::new(EstimatorId::Eta2, NuisancePlan::Empirical);
        assert!(run_estimator(&d1(), &req).is_err());
        assert!(!NuisanceMode::Empirical.supports(EstimatorId::Ate2));
        assert!(NuisanceMode::Split.supports(EstimatorId::Dr));
    }

    #[test]
    fn first_order_family_through_pipeline() {
        for id in [EstimatorId::Plugin, EstimatorId::Reg, EstimatorId::Ipw, EstimatorId::Dr] {
            let r = run_estimator(&d1(), &EstimationRequest::new(id, NuisancePlan::Empirical)).unwrap();
            assert_eq!(r.value, 0.0, "{id}");
        }
    }

    #[test]
    fn interval_centered_on_value() {
        let m = uniform_sim_model(4).unwrap();
        let data = draw_dataset(&m, 400, SeedSpec::new(1, 1)).unwrap();
        let mut req = EstimationRequest::new(EstimatorId::Plugin, NuisancePlan::Empirical);
        req.level = Some(0.9);
        let r = run_estimator(&data, &req).unwrap();
        let ci = r.ci.unwrap();
        assert!(ci.lower < r.value && r.value < ci.upper);
        assert!(((ci.lower + ci.upper) / 2.0 - r.value).abs() < 1e-12);
        req.estimator = EstimatorId::Homog;
        assert!(run_estimator(&data, &req).is_err());
    }

    #[test]
    fn split_plan_uses_half_the_sample() {
        let m = uniform_sim_model(3).unwrap();
        let data = draw_dataset(&m, 101, SeedSpec::new(2, 0)).unwrap();
        let req = EstimationRequest::new(EstimatorId::Eta2, NuisancePlan::Split(SeedSpec::new(2, 1)));
        let r = run_estimator(&data, &req).unwrap();
        assert_eq!(r.diagnostics["n_used"], 51.0);
    }

    #[test]
    fn mode_names_parse() {
        for (s, m) in [
            ("empirical", NuisanceMode::Empirical),
            ("split", NuisanceMode::Split),
            ("zero", NuisanceMode::Zero),
            ("file", NuisanceMode::Truth),
        ] {
            assert_eq!(s.parse::<NuisanceMode>().unwrap(), m);
        }
        assert!("bogus".parse::<NuisanceMode>().is_err());
    }
}
