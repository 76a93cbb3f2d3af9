use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{invalid, Result};

pub const KMEANS_RESTARTS: usize = 20;
const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// 0-based cluster index per row.
    pub assignment: Vec<usize>,
    pub centers: Vec<DVector<f64>>,
    pub within_ss: f64,
}

fn sq_dist(x: &DMatrix<f64>, row: usize, center: &DVector<f64>) -> f64 {
    x.row(row).iter().zip(center.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn check(x: &DMatrix<f64>, g: usize) -> Result<()> {
    if g == 0 || g > x.nrows() {
        return Err(invalid(format!("cannot form {g} clusters from {} rows", x.nrows())));
    }
    Ok(())
}

/// One run of Lloyd's algorithm from `g` distinct random rows. An emptied
/// cluster is reseeded with the row farthest from its current center.
pub fn lloyd<R: Rng + ?Sized>(x: &DMatrix<f64>, g: usize, rng: &mut R) -> Result<KMeansFit> {
    check(x, g)?;
    let t = x.nrows();
    let mut centers: Vec<DVector<f64>> = sample(rng, t, g).iter().map(|r| x.row(r).transpose()).collect();
    let mut assignment = vec![usize::MAX; t];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for r in 0..t {
            let best = (0..g)
                .map(|c| (c, sq_dist(x, r, &centers[c])))
                .fold((0, f64::INFINITY), |b, cur| if cur.1 < b.1 { cur } else { b })
                .0;
            if assignment[r] != best {
                assignment[r] = best;
                changed = true;
            }
        }
        let mut sizes = vec![0usize; g];
        let mut sums = vec![DVector::zeros(x.ncols()); g];
        for (r, &c) in assignment.iter().enumerate() {
            sizes[c] += 1;
            sums[c] += x.row(r).transpose();
        }
        for c in 0..g {
            if sizes[c] == 0 {
                let far = (0..t)
                    .max_by(|&a, &b| {
                        sq_dist(x, a, &centers[assignment[a]]).total_cmp(&sq_dist(x, b, &centers[assignment[b]]))
                    })
                    .expect("rows present");
                centers[c] = x.row(far).transpose();
                assignment[far] = c;
                changed = true;
            } else {
                centers[c] = &sums[c] / sizes[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let within_ss = (0..t).map(|r| sq_dist(x, r, &centers[assignment[r]])).sum();
    Ok(KMeansFit {
        assignment,
        centers,
        within_ss,
    })
}

/// Best of `restarts` Lloyd runs by within-cluster sum of squares.
pub fn kmeans<R: Rng + ?Sized>(x: &DMatrix<f64>, g: usize, restarts: usize, rng: &mut R) -> Result<KMeansFit> {
    check(x, g)?;
    let mut best: Option<KMeansFit> = None;
    for _ in 0..restarts.max(1) {
        let fit = lloyd(x, g, rng)?;
        if best.as_ref().is_none_or(|b| fit.within_ss < b.within_ss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separable_groups_recovered() {
        let x = DMatrix::from_row_slice(6, 2, &[0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 9.0, 9.0, 9.1, 9.0, 9.0, 9.1]);
        let fit = kmeans(&x, 2, 20, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(fit.assignment[0], fit.assignment[2]);
        assert_eq!(fit.assignment[3], fit.assignment[5]);
        assert_ne!(fit.assignment[0], fit.assignment[3]);
    }

    #[test]
    fn one_cluster_is_total_ss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(15, 3, |_, _| rng.random_range(-1.0..1.0));
        let fit = kmeans(&x, 1, 5, &mut rng).unwrap();
        let mean = x.row_mean();
        let total: f64 = x.row_iter().map(|r| (r - &mean).norm_squared()).sum();
        assert!((fit.within_ss - total).abs() < 1e-12);
    }

    #[test]
    fn restarts_envelope_single_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(40, 2, |_, _| rng.random_range(-1.0..1.0));
        let best = kmeans(&x, 4, 20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mut replay = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            assert!(best.within_ss <= lloyd(&x, 4, &mut replay).unwrap().within_ss + 1e-12);
        }
    }

    #[test]
    fn invalid_g() {
        let x = DMatrix::zeros(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(kmeans(&x, 0, 1, &mut rng).is_err());
        assert!(kmeans(&x, 4, 1, &mut rng).is_err());
    }
}
