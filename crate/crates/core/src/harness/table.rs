use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::bounds::rate_curve;
use crate::error::Result;
use crate::estimators::EstimatorId;

/// Aggregates of one `(n, gamma)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub n: usize,
    pub d: usize,
    pub gamma: f64,
    pub estimator: EstimatorId,
    pub m_requested: usize,
    /// Repetitions that produced an estimate.
    pub m_used: usize,
    pub failed: usize,
    pub rmse: f64,
    pub bias: f64,
    pub variance: f64,
    pub mc_se_rmse: f64,
    pub bound: Option<f64>,
    pub ratio: Option<f64>,
    pub status: CellStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    /// Every repetition failed its estimator preconditions.
    AllRepsFailed,
    /// `d` exceeded the per-dataset category cap; nothing was simulated.
    DimensionCapped,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

pub const HEADER: &str = "n,d,gamma,estimator,M,rmse,bias,variance,mc_se_rmse";

impl ResultTable {
    pub fn has_overlay(&self) -> bool {
        self.rows.iter().any(|r| r.bound.is_some())
    }

    pub fn row(&self, n: usize, gamma: f64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.n == n && (r.gamma - gamma).abs() < 1e-9)
    }

    /// Delimited text. Failed cells carry `NA` in the numeric columns; the `M`
    /// column is the number of repetitions that produced an estimate.
    pub fn to_csv(&self) -> String {
        let overlay = self.has_overlay();
        let mut out = String::from(HEADER);
        if overlay {
            out.push_str(",bound,ratio");
        }
        out.push('\n');
        for r in &self.rows {
            let num = |x: f64| if r.is_ok() && x.is_finite() { format!("{x}") } else { "NA".to_owned() };
            write!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.n,
                r.d,
                r.gamma,
                r.estimator,
                r.m_used,
                num(r.rmse),
                num(r.bias),
                num(r.variance),
                num(r.mc_se_rmse)
            )
            .expect("writing to a String");
            if overlay {
                let opt = |x: Option<f64>| x.filter(|v| v.is_finite()).map_or("NA".to_owned(), |v| format!("{v}"));
                write!(out, ",{},{}", opt(r.bound), opt(r.ratio)).expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    /// One `series_n<N>.csv` per sample size, columns `gamma,d,rmse[,bound]`.
    pub fn write_plot_series(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let overlay = self.has_overlay();
        let mut ns: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        ns.dedup();
        let mut written = Vec::new();
        for n in ns {
            let mut text = String::from(if overlay { "gamma,d,rmse,bound\n" } else { "gamma,d,rmse\n" });
            for r in self.rows.iter().filter(|r| r.n == n && r.is_ok()) {
                write!(text, "{},{},{}", r.gamma, r.d, r.rmse).expect("writing to a String");
                if overlay {
                    write!(text, ",{}", r.bound.unwrap_or(f64::NAN)).expect("writing to a String");
                }
                text.push('\n');
            }
            let path = dir.join(format!("series_n{n}.csv"));
            std::fs::write(&path, text)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Adds `bound = C n^{gamma/2 - 1}` and `ratio = rmse / bound` to every row.
pub fn overlay_curve(table: &ResultTable, c: f64) -> Result<ResultTable> {
    let mut out = table.clone();
    for r in &mut out.rows {
        let bound = rate_curve(c, r.gamma, r.n)?;
        r.bound = Some(bound);
        r.ratio = r.is_ok().then(|| r.rmse / bound);
    }
    Ok(out)
}
