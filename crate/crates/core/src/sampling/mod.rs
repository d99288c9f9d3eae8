//! Data generation from a [`ModelSpec`] and reduction to count tables.

mod dataset;
mod rng;
mod stats;

use rand::seq::SliceRandom;
use rand::Rng;

pub use dataset::{Dataset, Record};
pub use rng::{stream_key, SeedSpec};
pub use stats::{tabulate, CategoryCounts, SufficientStats};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Prepared sampler for one model: cumulative covariate masses are built once
/// (`O(d)`), after which each record costs `O(log d)`.
#[derive(Debug, Clone)]
pub struct ModelSampler<'a> {
    model: &'a ModelSpec,
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl<'a> ModelSampler<'a> {
    pub fn new(model: &'a ModelSpec) -> Result<Self> {
        model.check()?;
        let mut acc = 0.0;
        let cumulative = model
            .p
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect();
        let last_positive = model.p.iter().rposition(|&p| p > 0.0).expect("a valid simplex has positive mass");
        Ok(Self { model, cumulative, last_positive })
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    /// Draws `n` i.i.d. records on the stream named by `seed`.
    pub fn draw(&self, n: usize, seed: SeedSpec) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::TooFewRecords { required: 1, actual: 0 });
        }
        let mut rng = seed.rng();
        let total = self.cumulative[self.cumulative.len() - 1];
        let m = self.model;
        let records = (0..n)
            .map(|_| {
                let u = rng.random::<f64>() * total;
                let k = self.cumulative.partition_point(|&c| c <= u).min(self.last_positive);
                let a = rng.random_bool(m.pi[k]);
                let y = rng.random_bool(if a { m.mu1[k] } else { m.mu0[k] });
                Record::new(k as u32, a, y)
            })
            .collect();
        Ok(Dataset::from_parts_unchecked(m.d(), records))
    }
}

/// Draws an i.i.d. sample of size `n`. Deterministic in `(model, n, seed)`.
pub fn draw_dataset(model: &ModelSpec, n: usize, seed: SeedSpec) -> Result<Dataset> {
    ModelSampler::new(model)?.draw(n, seed)
}

/// Uniform covariate, propensity 1/2, arm means 1/2 and 1/4 (constant effect 1/4).
pub fn uniform_sim_model(d: usize) -> Result<ModelSpec> {
    if d == 0 {
        return Err(Error::InvalidInput("d must be at least 1".into()));
    }
    Ok(ModelSpec { p: vec![1.0 / d as f64; d], pi: vec![0.5; d], mu1: vec![0.5; d], mu0: vec![0.25; d] })
}

/// Random partition into halves of sizes `ceil(n/2)` and `floor(n/2)`.
pub fn split_sample(dataset: &Dataset, seed: SeedSpec) -> Result<(Dataset, Dataset)> {
    let n = dataset.n();
    if n < 2 {
        return Err(Error::TooFewRecords { required: 2, actual: n });
    }
    let mut records = dataset.records().to_vec();
    records.shuffle(&mut seed.rng());
    let second = records.split_off(n.div_ceil(2));
    Ok((Dataset::from_parts_unchecked(dataset.d(), records), Dataset::from_parts_unchecked(dataset.d(), second)))
}
