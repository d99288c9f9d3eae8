//! Treatment effect estimation with a single discrete covariate whose number
//! of categories may grow with the sample size.
//!
//! - [`model`]: the joint law of `(X, A, Y)` and its estimands.
//! - [`sampling`]: reproducible draws, datasets and sufficient statistics.
//! - [`estimators`]: plug-in, regression, IPW, DR, homogeneity and
//!   second-order U-statistic estimators.
//! - [`bounds`]: closed-form bias, variance and collision bounds.
//! - [`harness`]: Monte Carlo grids over `(n, gamma)` with `d = floor(n^gamma)`.
//! - [`verify`]: randomized self-checks against brute-force oracles.

// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod model;
pub mod pipeline;
pub mod sampling;
pub mod verify;

pub use error::{Error, Result};
pub use estimators::{EstimateResult, EstimatorId, NuisanceEstimates};
pub use model::{ModelClassParams, ModelSpec};
pub use sampling::{Dataset, Record, SeedSpec, SufficientStats};
