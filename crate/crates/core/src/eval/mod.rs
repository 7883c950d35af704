//! Label-agreement metrics, perplexity binning and report output.

mod assign;
mod report;

pub use assign::{max_weight_assignment, Alignment};
pub use report::{
    mi_report, read_perplexity_csv, read_timeline_csv, timeline_svg, write_perplexity_csv,
    write_timeline_csv, Confusion, MiReport, Thresholds, TimelineRow,
};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::imageio::Interest;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("non-finite value {value} at position {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Joint counts of two labelings. Rows and columns are the distinct observed labels of
/// each side in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
    pub counts: Vec<Vec<u64>>,
    pub row_totals: Vec<u64>,
    pub col_totals: Vec<u64>,
    pub total: u64,
}

impl ContingencyTable {
    pub fn from_labels(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(EvalError::LengthMismatch(a.len(), b.len()));
        }
        if a.is_empty() {
            return Err(EvalError::Empty);
        }
        let index = |labels: &[usize]| -> BTreeMap<usize, usize> {
            let mut m: BTreeMap<usize, usize> = labels.iter().map(|&l| (l, 0)).collect();
            for (i, v) in m.values_mut().enumerate() {
                *v = i;
            }
            m
        };
        let (ra, cb) = (index(a), index(b));
        let mut counts = vec![vec![0u64; cb.len()]; ra.len()];
        for (x, y) in a.iter().zip(b) {
            counts[ra[x]][cb[y]] += 1;
        }
        let row_totals: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
        let col_totals: Vec<u64> = (0..cb.len()).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            row_labels: ra.into_keys().collect(),
            col_labels: cb.into_keys().collect(),
            counts,
            row_totals,
            col_totals,
            total: a.len() as u64,
        })
    }

    /// Plug-in mutual information in nats.
    pub fn mutual_information(&self) -> f64 {
        let n = self.total as f64;
        let mut mi = 0.0;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let pxy = c as f64 / n;
                let px = self.row_totals[i] as f64 / n;
                let py = self.col_totals[j] as f64 / n;
                mi += pxy * (pxy / (px * py)).ln();
            }
        }
        mi.max(0.0)
    }

    pub fn row_entropy(&self) -> f64 {
        entropy_of_counts(&self.row_totals, self.total)
    }

    pub fn col_entropy(&self) -> f64 {
        entropy_of_counts(&self.col_totals, self.total)
    }
}

fn entropy_of_counts(counts: &[u64], total: u64) -> f64 {
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Shannon entropy of a labeling, in nats.
pub fn entropy(labels: &[usize]) -> Result<f64> {
    Ok(ContingencyTable::from_labels(labels, labels)?.row_entropy())
}

pub fn mutual_information(a: &[usize], b: &[usize]) -> Result<f64> {
    Ok(ContingencyTable::from_labels(a, b)?.mutual_information())
}

/// `I(a; b) / max(H(a), H(b))`, or 0 when both labelings are constant.
pub fn normalized_mi(a: &[usize], b: &[usize]) -> Result<f64> {
    let table = ContingencyTable::from_labels(a, b)?;
    let h = table.row_entropy().max(table.col_entropy());
    if h <= 0.0 {
        return Ok(0.0);
    }
    Ok((table.mutual_information() / h).clamp(0.0, 1.0))
}

/// Per-frame low/medium/high classes of a perplexity series.
#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityBins {
    pub bins: Vec<Interest>,
    pub mean: f64,
    pub std: f64,
}

impl PerplexityBins {
    /// Values above this are at least medium.
    pub fn medium_threshold(&self) -> f64 {
        self.mean + self.std
    }

    /// Values above this are high.
    pub fn high_threshold(&self) -> f64 {
        self.mean + 2.0 * self.std
    }

    pub fn count(&self, level: Interest) -> usize {
        self.bins.iter().filter(|&&b| b == level).count()
    }
}

/// Bins against the series mean μ and population standard deviation s:
/// low `x ≤ μ+s`, medium `μ+s < x ≤ μ+2s`, high `x > μ+2s`.
pub fn bin_perplexity(series: &[f64]) -> Result<PerplexityBins> {
    if series.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some((index, &value)) = series.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(EvalError::NonFinite { index, value });
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let std = (series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let (lo, hi) = (mean + std, mean + 2.0 * std);
    let bins = series
        .iter()
        .map(|&x| {
            if x <= lo {
                Interest::Low
            } else if x <= hi {
                Interest::Medium
            } else {
                Interest::High
            }
        })
        .collect();
    Ok(PerplexityBins { bins, mean, std })
}
