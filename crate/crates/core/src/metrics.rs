//! Agreement between a true labelling and a predicted partition.

use crate::error::{invalid, Error, Result};

/// True-class (rows) by predicted-cluster (columns) contingency table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchingMatrix {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
    row_labels: Vec<usize>,
    col_labels: Vec<usize>,
}

impl MatchingMatrix {
    /// Row-major counts; labels default to `1..=rows` and `1..=cols`.
    pub fn from_counts(rows: usize, cols: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} counts for a {rows}x{cols} table",
                counts.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            counts,
            row_labels: (1..=rows).collect(),
            col_labels: (1..=cols).collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.cols + j]
    }

    pub fn row_labels(&self) -> &[usize] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[usize] {
        &self.col_labels
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.cols).map(|j| (0..self.rows).map(|i| self.get(i, j)).sum()).collect()
    }
}

/// Tallies subjects by (true label, predicted label). Rows and columns follow
/// the sorted distinct label values.
pub fn matching_matrix(true_labels: &[usize], pred_labels: &[usize]) -> Result<MatchingMatrix> {
    if true_labels.len() != pred_labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} true labels vs {} predicted",
            true_labels.len(),
            pred_labels.len()
        )));
    }
    if true_labels.is_empty() {
        return Err(invalid("no subjects to compare"));
    }
    let distinct = |v: &[usize]| {
        let mut d = v.to_vec();
        d.sort_unstable();
        d.dedup();
        d
    };
    let (row_labels, col_labels) = (distinct(true_labels), distinct(pred_labels));
    let (rows, cols) = (row_labels.len(), col_labels.len());
    let mut counts = vec![0u64; rows * cols];
    for (t, p) in true_labels.iter().zip(pred_labels) {
        let i = row_labels.binary_search(t).expect("label present");
        let j = col_labels.binary_search(p).expect("label present");
        counts[i * cols + j] += 1;
    }
    Ok(MatchingMatrix {
        rows,
        cols,
        counts,
        row_labels,
        col_labels,
    })
}

/// Share of subjects outside the modal true class of their predicted cluster.
pub fn misassignment_rate(m: &MatchingMatrix) -> Result<f64> {
    let total = m.total();
    if total == 0 {
        return Err(invalid("empty matching matrix"));
    }
    let errors: u64 = (0..m.cols)
        .map(|j| {
            let col = (0..m.rows).map(|i| m.get(i, j));
            col.clone().sum::<u64>() - col.max().unwrap_or(0)
        })
        .sum();
    Ok(errors as f64 / total as f64)
}

/// Pearson chi-square statistic for homogeneity after dropping empty
/// predicted clusters.
pub fn pearson_chi2(m: &MatchingMatrix) -> Result<f64> {
    let cols: Vec<usize> = m.col_sums().iter().enumerate().filter(|(_, &s)| s > 0).map(|(j, _)| j).collect();
    let row_sums = m.row_sums();
    if cols.is_empty() || row_sums.contains(&0) {
        return Err(Error::DegenerateRange);
    }
    let col_sums = m.col_sums();
    let n = m.total() as f64;
    let mut stat = 0.0;
    for (i, &r) in row_sums.iter().enumerate() {
        for &j in &cols {
            let expected = r as f64 * col_sums[j] as f64 / n;
            let diff = m.get(i, j) as f64 - expected;
            stat += diff * diff / expected;
        }
    }
    Ok(stat)
}
