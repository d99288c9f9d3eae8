//! Monte Carlo grid over sample size `n` and dimension exponent `gamma`
//! (`d = floor(n^gamma)`), reporting RMSE, bias and variance per cell.
//!
//! Every repetition draws from its own ChaCha stream keyed by
//! `(n, gamma bits, rep)`, and aggregates are reduced in repetition order, so
//! results do not depend on the number of worker threads and any subset of a
//! grid reproduces in isolation.

mod table;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use table::{overlay_curve, CellStatus, ResultRow, ResultTable, HEADER};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorId, NuisanceEstimates};
use crate::model::{population_estimands, EstimandValues, ModelClassParams, ModelSpec};
use crate::pipeline::{run_estimator, EstimationRequest, NuisanceMode, NuisancePlan};
use crate::sampling::{stream_key, uniform_sim_model, ModelSampler, SeedSpec};

/// Largest number of categories simulated in one cell.
pub const MAX_CATEGORIES: usize = 10_000_000;

/// Clamp level for `wate2` when the config does not set `epsilon`.
pub const DEFAULT_EPSILON: f64 = 0.25;

const SPLIT_STREAM_TAG: u64 = 0x0053_504c_4954;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "uniform-sim")]
    UniformSim,
}

impl ModelFamily {
    pub fn build(&self, d: usize) -> Result<ModelSpec> {
        match self {
            ModelFamily::UniformSim => uniform_sim_model(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub estimator_id: EstimatorId,
    pub n_list: Vec<usize>,
    pub gamma_list: Vec<f64>,
    #[serde(rename = "M")]
    pub m: usize,
    pub master_seed: u64,
    pub model_family: ModelFamily,
    pub nuisance_mode: NuisanceMode,
    /// Constant of the benchmark curve `C n^{gamma/2 - 1}`.
    #[serde(default)]
    pub overlay: Option<f64>,
    /// Positivity level used to floor the `wate2` denominator (default 0.25).
    #[serde(default)]
    pub epsilon: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Parse { path: "<config>".into(), reason: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { reason, .. } => Error::Parse { path: path.display().to_string(), reason },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.m == 0 {
            return bad("M must be at least 1".into());
        }
        if self.n_list.is_empty() || self.gamma_list.is_empty() {
            return bad("n_list and gamma_list must be non-empty".into());
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n < 2) {
            return bad(format!("every n must be at least 2, got {n}"));
        }
        if let Some(g) = self.gamma_list.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return bad(format!("gamma values must be finite and >= 0, got {g}"));
        }
        if !self.nuisance_mode.supports(self.estimator_id) {
            return bad(format!(
                "estimator {} does not accept nuisance mode {}",
                self.estimator_id, self.nuisance_mode
            ));
        }
        if let Some(c) = self.overlay {
            if !(c > 0.0) {
                return bad(format!("overlay constant must be positive, got {c}"));
            }
        }
        if let Some(e) = self.epsilon {
            ModelClassParams::new(e)?;
        }
        Ok(())
    }
}

/// `floor(n^gamma)`, snapping values within rounding error of an integer.
pub fn grid_dimension(n: usize, gamma: f64) -> usize {
    let x = (n as f64).powf(gamma);
    let r = x.round();
    let d = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.floor() };
    d.max(1.0) as usize
}

/// Estimand targeted by `estimator`.
pub fn target_value(estimator: EstimatorId, truth: &EstimandValues) -> f64 {
    match estimator {
        EstimatorId::PluginPsi1 | EstimatorId::Psi1Second => truth.psi1,
        EstimatorId::PluginPsi0 | EstimatorId::Psi0Second => truth.psi0,
        EstimatorId::Eta2 => truth.eta,
        EstimatorId::Rho2 => truth.rho,
        EstimatorId::Wate2 => truth.theta,
        EstimatorId::Plugin
        | EstimatorId::Reg
        | EstimatorId::Ipw
        | EstimatorId::Dr
        | EstimatorId::Homog
        | EstimatorId::Ate2 => truth.psi,
    }
}

/// Stream for repetition `rep` of cell `(n, gamma)`.
pub fn rep_seed(master_seed: u64, n: usize, gamma: f64, rep: usize) -> SeedSpec {
    SeedSpec::derived(master_seed, &[n as u64, gamma.to_bits(), rep as u64])
}

/// Everything a cell needs besides the grid coordinates.
pub struct CellSpec<'a> {
    pub n: usize,
    pub gamma: f64,
    pub estimator: EstimatorId,
    pub model: &'a ModelSpec,
    pub truth: f64,
    pub m: usize,
    pub master_seed: u64,
    pub nuisance_mode: NuisanceMode,
    pub wate_clamp: Option<ModelClassParams>,
}

/// Runs `M` repetitions of one cell. Repetitions whose estimator fails are
/// excluded and counted.
pub fn run_cell(cell: &CellSpec<'_>) -> Result<ResultRow> {
    let sampler = ModelSampler::new(cell.model)?;
    let fixed = match cell.nuisance_mode {
        NuisanceMode::Zero => Some(NuisanceEstimates::zeroed(cell.model.p.clone())?),
        NuisanceMode::Truth => Some(NuisanceEstimates::from_model(cell.model)),
        NuisanceMode::Empirical | NuisanceMode::Split => None,
    };
    let estimates: Vec<Option<f64>> = (0..cell.m)
        .into_par_iter()
        .map(|rep| {
            let seed = rep_seed(cell.master_seed, cell.n, cell.gamma, rep);
            let data = sampler.draw(cell.n, seed).ok()?;
            let plan = match (&fixed, cell.nuisance_mode) {
                (Some(nu), _) => NuisancePlan::Fixed(nu),
                (None, NuisanceMode::Split) => NuisancePlan::Split(SeedSpec::new(
                    cell.master_seed,
                    stream_key(&[seed.stream_index, SPLIT_STREAM_TAG]),
                )),
                (None, _) => NuisancePlan::Empirical,
            };
            let mut req = EstimationRequest::new(cell.estimator, plan);
            req.wate_clamp = cell.wate_clamp;
            run_estimator(&data, &req).ok().map(|r| r.value).filter(|v| v.is_finite())
        })
        .collect();
    Ok(aggregate(cell, cell.model.d(), &estimates))
}

fn aggregate(cell: &CellSpec<'_>, d: usize, estimates: &[Option<f64>]) -> ResultRow {
    let used: Vec<f64> = estimates.iter().flatten().copied().collect();
    let m_used = used.len();
    let mut row = ResultRow {
        n: cell.n,
        d,
        gamma: cell.gamma,
        estimator: cell.estimator,
        m_requested: cell.m,
        m_used,
        failed: cell.m - m_used,
        rmse: f64::NAN,
        bias: f64::NAN,
        variance: f64::NAN,
        mc_se_rmse: f64::NAN,
        bound: None,
        ratio: None,
        status: CellStatus::AllRepsFailed,
    };
    if m_used == 0 {
        return row;
    }
    let m = m_used as f64;
    let mean = used.iter().sum::<f64>() / m;
    let mse = used.iter().map(|v| (v - cell.truth).powi(2)).sum::<f64>() / m;
    let variance = used.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
    // Delta method: se(sqrt(MSE)) = se(MSE) / (2 sqrt(MSE)).
    let var_sq = used.iter().map(|v| ((v - cell.truth).powi(2) - mse).powi(2)).sum::<f64>() / m;
    let rmse = mse.sqrt();
    row.rmse = rmse;
    row.bias = mean - cell.truth;
    row.variance = variance;
    row.mc_se_rmse = if rmse > 0.0 { (var_sq / m).sqrt() / (2.0 * rmse) } else { 0.0 };
    row.status = CellStatus::Ok;
    row
}

/// Runs every `(n, gamma)` cell on a pool of `workers` threads. Rows are
/// sorted by `(n, gamma)`; output is identical for any `workers`.
pub fn run_grid(config: &ExperimentConfig, workers: usize) -> Result<ResultTable> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let mut ns = config.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut gammas = config.gamma_list.clone();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    let wate_clamp = Some(ModelClassParams::new(config.epsilon.unwrap_or(DEFAULT_EPSILON))?);

    let mut table = ResultTable::default();
    for &n in &ns {
        for &gamma in &gammas {
            let d = grid_dimension(n, gamma);
            if d > MAX_CATEGORIES {
                table.rows.push(capped_row(config, n, gamma, d));
                continue;
            }
            let model = config.model_family.build(d)?;
            let truth = target_value(config.estimator_id, &population_estimands(&model));
            let cell = CellSpec {
                n,
                gamma,
                estimator: config.estimator_id,
                model: &model,
                truth,
                m: config.m,
                master_seed: config.master_seed,
                nuisance_mode: config.nuisance_mode,
                wate_clamp,
            };
            table.rows.push(pool.install(|| run_cell(&cell))?);
        }
    }
    match config.overlay {
        Some(c) => overlay_curve(&table, c),
        None => Ok(table),
    }
}

fn capped_row(config: &ExperimentConfig, n: usize, gamma: f64, d: usize) -> ResultRow {
    ResultRow {
        n,
        d,
        gamma,
        estimator: config.estimator_id,
        m_requested: config.m,
        m_used: 0,
        failed: config.m,
        rmse: f64::NAN,
        bias: f64::NAN,
        variance: f64::NAN,
        mc_se_rmse: f64::NAN,
        bound: None,
        ratio: None,
        status: CellStatus::DimensionCapped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(estimator: EstimatorId, mode: NuisanceMode) -> ExperimentConfig {
        ExperimentConfig {
            estimator_id: estimator,
            n_list: vec![100],
            gamma_list: vec![0.5],
            m: 1,
            master_seed: 11,
            model_family: ModelFamily::UniformSim,
            nuisance_mode: mode,
            overlay: None,
            epsilon: None,
        }
    }

    #[test]
    fn grid_dimension_floors_and_snaps() {
        assert_eq!(grid_dimension(1000, 1.0), 1000);
        assert_eq!(grid_dimension(10_000, 0.5), 100);
        assert_eq!(grid_dimension(1000, 0.5), 31);
        assert_eq!(grid_dimension(100, 1.5), 1000);
        assert_eq!(grid_dimension(5000, 0.0), 1);
    }

    #[test]
    fn smallest_grid_is_one_deterministic_row() {
        let cfg = config(EstimatorId::Plugin, NuisanceMode::Empirical);
        let a = run_grid(&cfg, 1).unwrap();
        let b = run_grid(&cfg, 3).unwrap();
        assert_eq!(a.rows.len(), 1);
        assert_eq!(a.to_csv(), b.to_csv());
        let r = &a.rows[0];
        assert_eq!((r.n, r.d, r.m_used), (100, 10, 1));
        assert_eq!(r.variance, 0.0);
        assert!((r.rmse - r.bias.abs()).abs() < 1e-15);
    }

    #[test]
    fn rmse_decomposes() {
        let mut cfg = config(EstimatorId::Homog, NuisanceMode::Empirical);
        cfg.m = 200;
        cfg.gamma_list = vec![0.5, 1.0, 1.3];
        for r in run_grid(&cfg, 2).unwrap().rows {
            assert!((r.rmse.powi(2) - (r.bias.powi(2) + r.variance)).abs() < 1e-9);
            assert!(r.mc_se_rmse >= 0.0);
        }
    }

    #[test]
    fn config_validation() {
        assert!(config(EstimatorId::Eta2, NuisanceMode::Empirical).validate().is_err());
        assert!(config(EstimatorId::Plugin, NuisanceMode::Zero).validate().is_err());
        let mut cfg = config(EstimatorId::Plugin, NuisanceMode::Empirical);
        cfg.m = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = config(EstimatorId::Plugin, NuisanceMode::Empirical);
        cfg.gamma_list = vec![-0.1];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_toml_uses_verbatim_keys() {
        let text = r#"
estimator_id = "eta2"
n_list = [100, 1000]
gamma_list = [0.5, 1.0]
M = 20
master_seed = 7
model_family = "uniform-sim"
nuisance_mode = "zero"
overlay = 0.5
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.m, 20);
        assert_eq!(cfg.estimator_id, EstimatorId::Eta2);
        assert_eq!(cfg.overlay, Some(0.5));
        assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        assert!(ExperimentConfig::from_toml_str("M = 3\n").is_err());
        assert!(ExperimentConfig::from_toml_str(&text.replace("M = 20", "M = 20\nbogus = 1")).is_err());
    }

    #[test]
    fn capped_cells_are_marked() {
        let mut cfg = config(EstimatorId::Plugin, NuisanceMode::Empirical);
        cfg.n_list = vec![5000];
        cfg.gamma_list = vec![2.0];
        let t = run_grid(&cfg, 1).unwrap();
        assert_eq!(t.rows[0].status, CellStatus::DimensionCapped);
        assert!(t.to_csv().contains(",NA,"));
    }

    #[test]
    fn failed_reps_are_counted() {
        // Split nuisances at d >> n almost never cover the estimation half.
        let mut cfg = config(EstimatorId::Eta2, NuisanceMode::Split);
        cfg.n_list = vec![20];
        cfg.gamma_list = vec![2.0];
        cfg.m = 5;
        let r = &run_grid(&cfg, 1).unwrap().rows[0];
        assert_eq!(r.m_used + r.failed, 5);
        assert!(r.failed > 0);
    }
}
