use super::{ratio_or_zero, EstimateResult, EstimatorId};
use crate::sampling::SufficientStats;

/// Effect estimate under (approximate) effect homogeneity.
///
/// Averages the within-category contrasts `mu1_hat_k - mu0_hat_k` over the
/// categories that hold both treated and untreated units ("collisions"),
/// weighted by `p_hat_k`. Returns 0 when there are no collisions.
pub fn homogeneity_tau(stats: &SufficientStats) -> EstimateResult {
    let n = stats.n() as f64;
    let mut weight = 0.0;
    let mut weighted = 0.0;
    let mut collisions = 0usize;
    for c in stats.cells().iter().filter(|c| c.has_collision()) {
        let t = c.total as f64 / n;
        let tau = c.treated_y1 as f64 / c.treated as f64 - c.untreated_y1 as f64 / c.untreated() as f64;
        weight += t;
        weighted += t * tau;
        collisions += 1;
    }
    EstimateResult::new(EstimatorId::Homog, ratio_or_zero(weighted, weight))
        .with_diagnostic("collision_categories", collisions as f64)
        .with_diagnostic("collision_mass", weight)
}
