use crate::error::{Error, Result};

use super::dataset::Dataset;

/// Counts for one observed category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CategoryCounts {
    /// 0-based category index.
    pub category: u32,
    /// `n * p_hat_k`
    pub total: u32,
    /// `n * w_hat_k`
    pub treated: u32,
    /// `n * q_hat_1k`
    pub treated_y1: u32,
    /// `n * q_hat_0k`
    pub untreated_y1: u32,
}

impl CategoryCounts {
    pub fn untreated(&self) -> u32 {
        self.total - self.treated
    }

    /// Both arms observed in this category.
    pub fn has_collision(&self) -> bool {
        self.treated > 0 && self.treated < self.total
    }

    fn is_consistent(&self) -> bool {
        self.treated <= self.total
            && self.treated_y1 <= self.treated
            && self.untreated_y1 <= self.total - self.treated.min(self.total)
    }
}

/// Per-category count table of a sample.
///
/// Only categories with at least one record are stored (sorted by category),
/// so memory is `O(min(n, d))` even when `d` is far larger than `n`. Dense
/// length-`d` views are available through the `count_*` accessors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SufficientStats {
    n: usize,
    d: usize,
    cells: Vec<CategoryCounts>,
}

impl SufficientStats {
    /// Builds a table from observed-category counts, checking all count invariants.
    pub fn from_cells(d: usize, mut cells: Vec<CategoryCounts>) -> Result<Self> {
        if let Some(c) = cells.iter().find(|c| !c.is_consistent()) {
            return Err(Error::InvalidInput(format!("inconsistent counts for category {}", c.category + 1)));
        }
        cells.retain(|c| c.total > 0);
        cells.sort_unstable_by_key(|c| c.category);
        if cells.windows(2).any(|w| w[0].category == w[1].category) {
            return Err(Error::InvalidInput("duplicate category in count table".into()));
        }
        if let Some(c) = cells.iter().find(|c| c.category as usize >= d) {
            return Err(Error::CategoryOutOfRange { category: c.category as u64 + 1, d });
        }
        let n = cells.iter().map(|c| c.total as usize).sum();
        if n == 0 {
            return Err(Error::TooFewRecords { required: 1, actual: 0 });
        }
        Ok(Self { n, d, cells })
    }

    /// Builds a table from the four dense count vectors.
    pub fn from_dense(
        count_x: &[u32],
        count_x_treated: &[u32],
        count_x_treated_y1: &[u32],
        count_x_untreated_y1: &[u32],
    ) -> Result<Self> {
        let d = count_x.len();
        for v in [count_x_treated, count_x_treated_y1, count_x_untreated_y1] {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: v.len() });
            }
        }
        let cells = (0..d)
            .filter(|&k| count_x[k] > 0 || count_x_treated[k] > 0)
            .map(|k| CategoryCounts {
                category: k as u32,
                total: count_x[k],
                treated: count_x_treated[k],
                treated_y1: count_x_treated_y1[k],
                untreated_y1: count_x_untreated_y1[k],
            })
            .collect::<Vec<_>>();
        Self::from_cells(d, cells)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Observed categories in ascending order.
    pub fn cells(&self) -> &[CategoryCounts] {
        &self.cells
    }

    pub fn count_x(&self) -> Vec<u32> {
        self.dense(|c| c.total)
    }

    pub fn count_x_treated(&self) -> Vec<u32> {
        self.dense(|c| c.treated)
    }

    pub fn count_x_treated_y1(&self) -> Vec<u32> {
        self.dense(|c| c.treated_y1)
    }

    pub fn count_x_untreated_y1(&self) -> Vec<u32> {
        self.dense(|c| c.untreated_y1)
    }

    fn dense(&self, f: impl Fn(&CategoryCounts) -> u32) -> Vec<u32> {
        let mut out = vec![0; self.d];
        for c in &self.cells {
            out[c.category as usize] = f(c);
        }
        out
    }
}

/// Reduces a dataset to its count table.
///
/// Uses a dense counting pass when `d` is comparable to `n` and a sort-based
/// grouping otherwise, so cost never scales with `d` alone.
pub fn tabulate(dataset: &Dataset) -> SufficientStats {
    let d = dataset.d();
    let n = dataset.n();
    let cells = if d <= 4 * n {
        let mut dense = vec![CategoryCounts::default(); d];
        for r in dataset.records() {
            bump(&mut dense[r.category()], r.a, r.y);
        }
        dense
            .into_iter()
            .enumerate()
            .filter(|(_, c)| c.total > 0)
            .map(|(k, c)| CategoryCounts { category: k as u32, ..c })
            .collect()
    } else {
        let mut keys: Vec<u64> =
            dataset.records().iter().map(|r| (r.x as u64) << 2 | (r.a as u64) << 1 | r.y as u64).collect();
        keys.sort_unstable();
        let mut cells: Vec<CategoryCounts> = Vec::new();
        for key in keys {
            let category = (key >> 2) as u32;
            if cells.last().is_none_or(|c| c.category != category) {
                cells.push(CategoryCounts { category, ..Default::default() });
            }
            bump(cells.last_mut().expect("pushed above"), key & 2 != 0, key & 1 != 0);
        }
        cells
    };
    SufficientStats { n, d, cells }
}

#[inline]
fn bump(c: &mut CategoryCounts, a: bool, y: bool) {
    c.total += 1;
    if a {
        c.treated += 1;
        c.treated_y1 += y as u32;
    } else {
        c.untreated_y1 += y as u32;
    }
}
