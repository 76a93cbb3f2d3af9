//! Posterior summaries to a final partition: dissimilarities, Ward
//! agglomeration and Krzanowski-Lai rank selection.

mod rank;
mod ward;

pub use rank::{kl_statistics, krzanowski_lai_rank, within_dispersion, KlReport, DISPERSION_ZERO_TOLERANCE};
pub use ward::{ward_cluster, Dendrogram, Merge};

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::sampler::ChainTrace;

/// Cluster labels `1..=g` for each subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    groups: usize,
}

impl Partition {
    /// Relabels arbitrary ids to `1..=g` in order of first appearance.
    pub fn from_labels<T: Eq + std::hash::Hash + Copy>(raw: &[T]) -> Self {
        let mut seen = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|id| {
                let next = seen.len() + 1;
                *seen.entry(*id).or_insert(next)
            })
            .collect();
        Self {
            labels,
            groups: seen.len(),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Per-subject average of the assigned atom over retained iterations.
pub fn posterior_mean_surfaces(trace: &ChainTrace) -> Result<DMatrix<f64>> {
    if trace.is_empty() {
        return Err(invalid("empty trace"));
    }
    let sums = trace.theta_sums();
    let n = sums.first().map_or(0, Vec::len);
    let draws = trace.len() as f64;
    Ok(DMatrix::from_fn(sums.len(), n, |t, i| sums[t][i] / draws))
}

/// Squared Euclidean distances between rows.
pub fn dissimilarity(surfaces: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let t = surfaces.nrows();
    if t < 2 {
        return Err(invalid("need at least two subjects"));
    }
    let mut d = DMatrix::zeros(t, t);
    for u in 0..t {
        for v in (u + 1)..t {
            let duv = (surfaces.row(u) - surfaces.row(v)).norm_squared();
            d[(u, v)] = duv;
            d[(v, u)] = duv;
        }
    }
    Ok(d)
}

/// Full inference path: dissimilarity, Ward tree, rank choice, cut.
pub fn cluster_surfaces(surfaces: &DMatrix<f64>, g_max: Option<usize>) -> Result<(Partition, Dendrogram, KlReport)> {
    let d = dissimilarity(surfaces)?;
    let dend = ward_cluster(&d)?;
    let t = surfaces.nrows();
    let g_max = g_max.unwrap_or_else(|| default_g_max(t));
    let report = kl_statistics(surfaces, &dend, g_max)?;
    let partition = dend.cut(report.rank)?;
    Ok((partition, dend, report))
}

/// `min(10, T - 1)`.
pub fn default_g_max(subjects: usize) -> usize {
    10.min(subjects.saturating_sub(1))
}
