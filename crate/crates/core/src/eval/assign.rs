//! Optimal one-to-one label alignment.

use super::ContingencyTable;

/// Maximum-weight assignment of rows to columns of a rectangular weight matrix.
/// Returns, per row, the matched column (rows beyond the column count get `None`).
///
/// Shortest augmenting path Hungarian method, O(n³) on the padded square matrix.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.iter().map(Vec::len).max().unwrap_or(0);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let top = weights
        .iter()
        .flatten()
        .fold(0.0f64, |m, &w| m.max(w));
    let cost = |i: usize, j: usize| -> f64 {
        let w = weights.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0.0);
        top - w
    };

    // 1-based potentials; p[j] is the row matched to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// Pairing of predicted labels (table rows) with reference labels (table columns) that
/// maximizes the number of agreeing items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// (predicted label, reference label); predicted labels left over map to `None`.
    pub pairs: Vec<(usize, Option<usize>)>,
    pub agreeing: u64,
}

impl Alignment {
    pub fn of(table: &ContingencyTable) -> Self {
        let weights: Vec<Vec<f64>> = table
            .counts
            .iter()
            .map(|r| r.iter().map(|&c| c as f64).collect())
            .collect();
        let matched = max_weight_assignment(&weights);
        let mut agreeing = 0;
        let pairs = matched
            .iter()
            .enumerate()
            .map(|(i, m)| {
                if let Some(j) = m {
                    agreeing += table.counts[i][*j];
                }
                (table.row_labels[i], m.map(|j| table.col_labels[j]))
            })
            .collect();
        Self { pairs, agreeing }
    }
}
