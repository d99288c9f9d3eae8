//! Self-check over random models and datasets.
//!
//! Two families of checks:
//! - regression, IPW and DR with same-sample empirical nuisances agree with
//!   the plug-in estimator;
//! - the grouped pair sums of the second-order estimators agree with a naive
//!   double loop over all ordered pairs.

use rand::Rng;

use crate::error::Result;
use crate::estimators::{
    dr_ate, ipw_ate, nuisance_mle, plugin_ate, reg_ate, second_order_ate, second_order_eta, second_order_rho,
    NuisanceEstimates, Truncation,
};
use crate::model::ModelSpec;
use crate::sampling::{draw_dataset, tabulate, Dataset, SeedSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub cases: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Clamp propensities in IPW/DR. Breaks the equivalence on purpose.
    pub truncate_propensity: Option<f64>,
    pub max_d: usize,
    pub max_n: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { cases: 1000, seed: 0, tolerance: 1e-10, truncate_propensity: None, max_d: 50, max_n: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Equivalence,
    PairSum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyFailure {
    pub check: Check,
    pub case: usize,
    /// Reproduces the failing case via [`random_case`].
    pub seed: SeedSpec,
    pub what: String,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub equivalence_cases: usize,
    pub pair_sum_cases: usize,
    pub max_equivalence_diff: f64,
    pub max_pair_sum_diff: f64,
    pub failures: Vec<VerifyFailure>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "equivalence: cases={} max_diff={:e}\npair_sum: cases={} max_diff={:e}\n",
            self.equivalence_cases, self.max_equivalence_diff, self.pair_sum_cases, self.max_pair_sum_diff
        );
        for f in self.failures.iter().take(10) {
            out.push_str(&format!(
                "FAIL {:?} case={} seed={}:{} {} diff={:e}\n",
                f.check, f.case, f.seed.master_seed, f.seed.stream_index, f.what, f.difference
            ));
        }
        out.push_str(if self.passed() { "verify: PASS\n" } else { "verify: FAIL\n" });
        out
    }
}

/// Random model with some empty-mass categories and some propensities at 0 or 1,
/// and a dataset drawn from it.
pub fn random_case(seed: SeedSpec, max_d: usize, max_n: usize) -> Result<(ModelSpec, Dataset)> {
    let mut rng = seed.rng();
    let d = rng.random_range(1..=max_d.max(1));
    let n = rng.random_range(2..=max_n.max(2));
    let mut p: Vec<f64> = (0..d).map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random::<f64>() }).collect();
    if p.iter().all(|&w| w == 0.0) {
        p[0] = 1.0;
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|w| *w /= total);
    let pi = (0..d)
        .map(|_| match rng.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        })
        .collect();
    let mu1 = (0..d).map(|_| rng.random::<f64>()).collect();
    let mu0 = (0..d).map(|_| rng.random::<f64>()).collect();
    let model = ModelSpec::new(p, pi, mu1, mu0)?;
    let data = draw_dataset(&model, n, SeedSpec::new(seed.master_seed, seed.stream_index ^ 0x0da7a))?;
    Ok((model, data))
}

/// Nuisances bounded away from the degenerate values, independent of the data.
pub fn random_nuisances(seed: SeedSpec, d: usize) -> NuisanceEstimates {
    let mut rng = seed.rng();
    let mut p: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|w| *w /= total);
    let pi = (0..d).map(|_| rng.random_range(0.05..0.95)).collect();
    let mu1 = (0..d).map(|_| rng.random::<f64>()).collect();
    let mu0 = (0..d).map(|_| rng.random::<f64>()).collect();
    NuisanceEstimates::external(p, pi, mu1, mu0).expect("valid random nuisances")
}

/// `(1/(n(n-1))) sum_{i != j, X_i = X_j} u_i v_j / p_hat(X_i)` by brute force.
pub fn naive_pair_mean(data: &Dataset, p_hat: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let recs = data.records();
    let n = recs.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && recs[i].x == recs[j].x {
                sum += u[i] * v[j] / p_hat[recs[i].x as usize];
            }
        }
    }
    sum / (n as f64 * (n as f64 - 1.0))
}

/// Naive second-order estimates `(eta, rho, ate)`.
pub fn naive_second_order(data: &Dataset, nu: &NuisanceEstimates) -> (f64, f64, f64) {
    let recs = data.records();
    let n = recs.len() as f64;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / n;

    let a_res: Vec<f64> = recs.iter().map(|r| r.a_f64() - nu.pi_hat[r.x as usize]).collect();
    let y_res: Vec<f64> = recs
        .iter()
        .map(|r| {
            let k = r.x as usize;
            r.y_f64() - (nu.pi_hat[k] * nu.mu1_hat[k] + (1.0 - nu.pi_hat[k]) * nu.mu0_hat[k])
        })
        .collect();
    let eta_lin: Vec<f64> = a_res.iter().zip(&y_res).map(|(a, y)| a * y).collect();
    let eta = mean(&eta_lin) - naive_pair_mean(data, &nu.p_hat, &a_res, &y_res);
    let rho_lin: Vec<f64> = a_res.iter().map(|a| a * a).collect();
    let rho = mean(&rho_lin) - naive_pair_mean(data, &nu.p_hat, &a_res, &a_res);

    let arm = |treated: bool| {
        let mut lin = Vec::new();
        let mut u = Vec::new();
        let mut v = Vec::new();
        for r in recs {
            let k = r.x as usize;
            let (ind, prop, mu) = if treated {
                (r.a_f64(), nu.pi_hat[k], nu.mu1_hat[k])
            } else {
                (1.0 - r.a_f64(), 1.0 - nu.pi_hat[k], nu.mu0_hat[k])
            };
            let resid = ind * (r.y_f64() - mu) / prop;
            lin.push(resid + mu);
            u.push(ind / prop - 1.0);
            v.push(resid);
        }
        mean(&lin) - naive_pair_mean(data, &nu.p_hat, &u, &v)
    };
    (eta, rho, arm(true) - arm(false))
}

fn equivalence_diffs(data: &Dataset, truncation: Truncation) -> Result<Vec<(&'static str, f64)>> {
    let plugin = plugin_ate(&tabulate(data)).value;
    let nu = nuisance_mle(&tabulate(data));
    let reg = reg_ate(data, &nu)?.value;
    let ipw = ipw_ate(data, &nu, truncation)?.value;
    let dr = dr_ate(data, &nu, truncation)?.value;
    Ok(vec![("reg-plugin", reg - plugin), ("ipw-plugin", ipw - plugin), ("dr-plugin", dr - plugin)])
}

fn pair_sum_diffs(data: &Dataset, nu: &NuisanceEstimates) -> Result<Vec<(&'static str, f64)>> {
    let (eta, rho, ate) = naive_second_order(data, nu);
    Ok(vec![
        ("eta", second_order_eta(data, nu)?.value - eta),
        ("rho", second_order_rho(data, nu)?.value - rho),
        ("ate", second_order_ate(data, nu)?.value - ate),
    ])
}

/// Runs `cases` equivalence checks and `cases / 5` (at least one) pair-sum checks.
pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let truncation = opts.truncate_propensity.map_or(Truncation::None, Truncation::At);
    let mut report = VerifyReport::default();
    let record = |report: &mut VerifyReport, check, case, seed, diffs: Result<Vec<(&'static str, f64)>>| {
        let diffs = match diffs {
            Ok(d) => d,
            Err(e) => {
                report.failures.push(VerifyFailure {
                    check,
                    case,
                    seed,
                    what: e.to_string(),
                    difference: f64::INFINITY,
                });
                return;
            }
        };
        for (what, diff) in diffs {
            let diff = diff.abs();
            let max = match check {
                Check::Equivalence => &mut report.max_equivalence_diff,
                Check::PairSum => &mut report.max_pair_sum_diff,
            };
            *max = max.max(diff);
            if !(diff < opts.tolerance) {
                report.failures.push(VerifyFailure { check, case, seed, what: what.into(), difference: diff });
            }
        }
    };

    for case in 0..opts.cases {
        let seed = SeedSpec::derived(opts.seed, &[0, case as u64]);
        let (_, data) = random_case(seed, opts.max_d, opts.max_n)?;
        record(&mut report, Check::Equivalence, case, seed, equivalence_diffs(&data, truncation));
        report.equivalence_cases += 1;
    }
    let pair_cases = (opts.cases / 5).max(1);
    for case in 0..pair_cases {
        let seed = SeedSpec::derived(opts.seed, &[1, case as u64]);
        let (_, data) = random_case(seed, opts.max_d, opts.max_n.min(100))?;
        let nu = random_nuisances(SeedSpec::derived(opts.seed, &[2, case as u64]), data.d());
        record(&mut report, Check::PairSum, case, seed, pair_sum_diffs(&data, &nu));
        report.pair_sum_cases += 1;
    }
    Ok(report)
}
