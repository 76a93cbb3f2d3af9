use nalgebra::DMatrix;

use super::{Dendrogram, Partition};
use crate::error::{invalid, Result};

/// Within-cluster sum of squared distances to cluster means.
pub fn within_dispersion(surfaces: &DMatrix<f64>, partition: &Partition) -> f64 {
    let n = surfaces.ncols();
    let g = partition.groups();
    let mut sums = vec![vec![0.0; n]; g];
    let mut counts = vec![0usize; g];
    for (t, &label) in partition.labels().iter().enumerate() {
        counts[label - 1] += 1;
        for (acc, v) in sums[label - 1].iter_mut().zip(surfaces.row(t).iter()) {
            *acc += v;
        }
    }
    partition
        .labels()
        .iter()
        .enumerate()
        .map(|(t, &label)| {
            let c = counts[label - 1] as f64;
            surfaces
                .row(t)
                .iter()
                .zip(&sums[label - 1])
                .map(|(v, s)| (v - s / c).powi(2))
                .sum::<f64>()
        })
        .sum()
}

/// Dispersions at or below this fraction of `W_1` are treated as exact zeros.
pub const DISPERSION_ZERO_TOLERANCE: f64 = 1e-12;

/// Dispersions and Krzanowski-Lai statistics behind a rank choice.
#[derive(Debug, Clone, PartialEq)]
pub struct KlReport {
    /// `W_g` for `g = 1..=g_max + 1`.
    pub dispersion: Vec<f64>,
    /// `(g, KL(g))` for `g = 2..=g_max`.
    pub statistics: Vec<(usize, f64)>,
    pub rank: usize,
}

/// Krzanowski-Lai statistics over Ward cuts,
/// `DIFF(g) = (g-1)^{2/n} W_{g-1} - g^{2/n} W_g`,
/// `KL(g) = |DIFF(g)| / |DIFF(g+1)|`, with `n` the number of columns.
///
/// When the rows take only `D` distinct values, `W_g = 0` for `g >= D`, so
/// `KL(D)` is infinite and every later ratio is `0/0`, scored as 0. The rank
/// is then `D`.
pub fn kl_statistics(surfaces: &DMatrix<f64>, dend: &Dendrogram, g_max: usize) -> Result<KlReport> {
    let t = surfaces.nrows();
    if g_max < 2 || g_max + 1 > t {
        return Err(invalid(format!(
            "g_max must lie in 2..={} for {t} subjects, got {g_max}",
            t.saturating_sub(1)
        )));
    }
    if dend.leaves() != t {
        return Err(invalid("dendrogram and surfaces disagree on subject count"));
    }
    let mut dispersion = (1..=g_max + 1)
        .map(|g| Ok(within_dispersion(surfaces, &dend.cut(g)?)))
        .collect::<Result<Vec<f64>>>()?;
    // cuts that only separate identical surfaces leave rounding residue
    let floor = DISPERSION_ZERO_TOLERANCE * dispersion[0];
    for w in dispersion.iter_mut().filter(|w| **w <= floor) {
        *w = 0.0;
    }
    let exponent = 2.0 / surfaces.ncols() as f64;
    let w = |g: usize| dispersion[g - 1];
    let diff = |g: usize| ((g - 1) as f64).powf(exponent) * w(g - 1) - (g as f64).powf(exponent) * w(g);
    let statistics: Vec<(usize, f64)> = (2..=g_max)
        .map(|g| {
            let (num, den) = (diff(g).abs(), diff(g + 1).abs());
            let kl = if den > 0.0 {
                num / den
            } else if num > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            (g, kl)
        })
        .collect();
    let rank = statistics
        .iter()
        .fold((2, f64::NEG_INFINITY), |best, &(g, kl)| if kl > best.1 { (g, kl) } else { best })
        .0;
    Ok(KlReport {
        dispersion,
        statistics,
        rank,
    })
}

/// Rank maximizing the Krzanowski-Lai statistic over `2..=g_max`.
pub fn krzanowski_lai_rank(surfaces: &DMatrix<f64>, dend: &Dendrogram, g_max: usize) -> Result<usize> {
    kl_statistics(surfaces, dend, g_max).map(|r| r.rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{dissimilarity, ward_cluster};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn blobs(centers: &[Vec<f64>], per: usize, spread: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let n = centers[0].len();
        let rows = centers.len() * per;
        DMatrix::from_fn(rows, n, |r, c| centers[r / per][c] + spread * rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn two_tight_blobs_give_rank_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = blobs(&[vec![0.0; 6], vec![10.0; 6]], 8, 0.3, &mut rng);
        let dend = ward_cluster(&dissimilarity(&s).unwrap()).unwrap();
        let report = kl_statistics(&s, &dend, 6).unwrap();
        assert_eq!(report.rank, 2);
        // oracle: direct dispersion of the true split
        let truth = Partition::from_labels(&(0..16).map(|t| t / 8).collect::<Vec<_>>());
        assert!((report.dispersion[1] - within_dispersion(&s, &truth)).abs() < 1e-9);
    }

    #[test]
    fn dispersion_non_increasing_over_nested_cuts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = DMatrix::from_fn(25, 5, |_, _| rng.random_range(-2.0..2.0));
        let dend = ward_cluster(&dissimilarity(&s).unwrap()).unwrap();
        let report = kl_statistics(&s, &dend, 10).unwrap();
        for w in report.dispersion.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn five_separated_blobs_give_rank_five() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mut hits = 0;
        for _ in 0..50 {
            let centers: Vec<Vec<f64>> = (0..5)
                .map(|c| (0..16).map(|i| if i == 3 * c { 12.0 } else { 0.0 }).collect())
                .collect();
            let s = blobs(&centers, 10, 1.0, &mut rng);
            let dend = ward_cluster(&dissimilarity(&s).unwrap()).unwrap();
            if krzanowski_lai_rank(&s, &dend, 10).unwrap() == 5 {
                hits += 1;
            }
        }
        assert!(hits >= 45, "{hits}/50");
    }

    #[test]
    fn duplicated_surfaces_give_their_distinct_count() {
        // three distinct rows, each repeated; values chosen so centroids carry rounding error
        let base = [[0.1, 0.7, 1.3], [5.3, 0.2, 2.9], [9.7, 4.1, 0.3]];
        let s = DMatrix::from_fn(12, 3, |r, c| base[r % 3][c]);
        let dend = ward_cluster(&dissimilarity(&s).unwrap()).unwrap();
        let report = kl_statistics(&s, &dend, 8).unwrap();
        assert!(report.dispersion[2..].iter().all(|&w| w == 0.0));
        assert_eq!(report.rank, 3);
        assert!(report.statistics[1].1.is_infinite());
        assert!(report.statistics[2..].iter().all(|&(_, kl)| kl == 0.0));
    }

    #[test]
    fn g_max_out_of_range() {
        let s = DMatrix::from_fn(5, 2, |r, c| (r * 2 + c) as f64);
        let dend = ward_cluster(&dissimilarity(&s).unwrap()).unwrap();
        assert!(krzanowski_lai_rank(&s, &dend, 1).is_err());
        assert!(krzanowski_lai_rank(&s, &dend, 5).is_err());
        assert!(krzanowski_lai_rank(&s, &dend, 4).is_ok());
    }
}
