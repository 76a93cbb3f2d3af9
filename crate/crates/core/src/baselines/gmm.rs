use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::kmeans::lloyd;
use crate::error::{invalid, Error, Result};

pub const GMM_RESTARTS: usize = 10;
pub const GMM_MAX_ITERATIONS: usize = 500;
pub const COVARIANCE_RIDGE: f64 = 1e-6;
const LOGLIK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub components: Vec<GaussianComponent>,
    /// 0-based component of maximum responsibility per row.
    pub assignment: Vec<usize>,
    pub log_likelihood: f64,
    /// Log-likelihood after each EM iteration.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// `log N(x; mean, cov)` for every row, or an error if `cov` is not PD.
fn log_densities(x: &DMatrix<f64>, comp: &GaussianComponent) -> Result<Vec<f64>> {
    let d = x.ncols() as f64;
    let chol = comp
        .covariance
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("mixture covariance lost positive definiteness".into()))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let base = -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det);
    Ok(x.row_iter()
        .map(|row| {
            let diff = row.transpose() - &comp.mean;
            let z = chol.l_dirty().solve_lower_triangular(&diff).expect("nonsingular factor");
            base - 0.5 * z.norm_squared()
        })
        .collect())
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|a| (a - m).exp()).sum::<f64>().ln()
}

/// Mixture log-likelihood evaluated directly from the components.
pub fn mixture_log_likelihood(x: &DMatrix<f64>, components: &[GaussianComponent]) -> Result<f64> {
    let per: Vec<Vec<f64>> = components.iter().map(|c| log_densities(x, c)).collect::<Result<_>>()?;
    Ok((0..x.nrows())
        .map(|r| {
            let terms: Vec<f64> = components.iter().zip(&per).map(|(c, ld)| c.weight.ln() + ld[r]).collect();
            log_sum_exp(&terms)
        })
        .sum())
}

fn m_step(x: &DMatrix<f64>, resp: &DMatrix<f64>, previous: &[GaussianComponent]) -> Vec<GaussianComponent> {
    let (t, d) = (x.nrows(), x.ncols());
    (0..resp.ncols())
        .map(|k| {
            let col = resp.column(k);
            let nk = col.sum();
            if nk < 1e-10 {
                // an emptied component keeps its parameters at negligible weight
                return GaussianComponent {
                    weight: f64::MIN_POSITIVE,
                    ..previous[k].clone()
                };
            }
            let mean = x.tr_mul(&col) / nk;
            let mut cov = DMatrix::<f64>::zeros(d, d);
            for r in 0..t {
                let diff = x.row(r).transpose() - &mean;
                cov += col[r] * &diff * diff.transpose();
            }
            cov /= nk;
            for i in 0..d {
                cov[(i, i)] += COVARIANCE_RIDGE;
            }
            GaussianComponent {
                weight: nk / t as f64,
                mean,
                covariance: cov,
            }
        })
        .collect()
}

fn e_step(x: &DMatrix<f64>, comps: &[GaussianComponent]) -> Result<(DMatrix<f64>, f64)> {
    let per: Vec<Vec<f64>> = comps.iter().map(|c| log_densities(x, c)).collect::<Result<_>>()?;
    let mut resp = DMatrix::zeros(x.nrows(), comps.len());
    let mut ll = 0.0;
    for r in 0..x.nrows() {
        let terms: Vec<f64> = comps.iter().zip(&per).map(|(c, ld)| c.weight.ln() + ld[r]).collect();
        let norm = log_sum_exp(&terms);
        ll += norm;
        for (k, v) in terms.iter().enumerate() {
            resp[(r, k)] = (v - norm).exp();
        }
    }
    Ok((resp, ll))
}

/// EM from a hard initial assignment.
pub fn em_from_assignment(x: &DMatrix<f64>, g: usize, assignment: &[usize]) -> Result<GmmFit> {
    let mut resp = DMatrix::zeros(x.nrows(), g);
    for (r, &k) in assignment.iter().enumerate() {
        resp[(r, k)] = 1.0;
    }
    let init: Vec<GaussianComponent> = (0..g)
        .map(|_| GaussianComponent {
            weight: 1.0 / g as f64,
            mean: DVector::zeros(x.ncols()),
            covariance: DMatrix::identity(x.ncols(), x.ncols()),
        })
        .collect();
    let mut comps = m_step(x, &resp, &init);
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..GMM_MAX_ITERATIONS {
        let (r, ll) = e_step(x, &comps)?;
        if let Some(&prev) = history.last() {
            if (ll - prev) <= LOGLIK_TOLERANCE * (1.0 + f64::abs(prev)) {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        resp = r;
        comps = m_step(x, &resp, &comps);
    }
    let (resp, log_likelihood) = e_step(x, &comps)?;
    let assignment = resp
        .row_iter()
        .map(|row| row.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b }).0)
        .collect();
    Ok(GmmFit {
        components: comps,
        assignment,
        log_likelihood,
        history,
        converged,
    })
}

/// Full-covariance mixture fitted by EM from `restarts` k-means starts;
/// the highest final log-likelihood wins.
pub fn gmm<R: Rng + ?Sized>(x: &DMatrix<f64>, g: usize, restarts: usize, rng: &mut R) -> Result<GmmFit> {
    if g == 0 || g > x.nrows() {
        return Err(invalid(format!("cannot form {g} components from {} rows", x.nrows())));
    }
    let mut best: Option<GmmFit> = None;
    let mut last_err = None;
    for _ in 0..restarts.max(1) {
        let start = lloyd(x, g, rng)?;
        match em_from_assignment(x, g, &start.assignment) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let best = best.ok_or_else(|| last_err.expect("some restart ran"))?;
    if !best.converged {
        log::warn!("mixture EM stopped after {GMM_MAX_ITERATIONS} iterations without converging");
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn two_blobs(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(60, 2, |r, _| if r < 30 { 0.0 } else { 8.0 } + rng.sample::<f64, _>(StandardNormal))
    }

    /// Independent density: explicit 2x2 inverse and determinant.
    fn oracle_ll(x: &DMatrix<f64>, comps: &[GaussianComponent]) -> f64 {
        let mut ll = 0.0;
        for r in 0..x.nrows() {
            let mut dens = 0.0;
            for c in comps {
                let s = &c.covariance;
                let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
                let (a, b) = (x[(r, 0)] - c.mean[0], x[(r, 1)] - c.mean[1]);
                let q = (s[(1, 1)] * a * a - 2.0 * s[(0, 1)] * a * b + s[(0, 0)] * b * b) / det;
                dens += c.weight * (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt());
            }
            ll += dens.ln();
        }
        ll
    }

    #[test]
    fn recovers_separated_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = two_blobs(&mut rng);
        let fit = gmm(&x, 2, 10, &mut rng).unwrap();
        assert!(fit.assignment[..30].iter().all(|&k| k == fit.assignment[0]));
        assert!(fit.assignment[30..].iter().all(|&k| k == fit.assignment[30]));
        assert_ne!(fit.assignment[0], fit.assignment[30]);
        let oracle = oracle_ll(&x, &fit.components);
        assert!((fit.log_likelihood - oracle).abs() < 1e-8 * oracle.abs().max(1.0));
        assert!((mixture_log_likelihood(&x, &fit.components).unwrap() - oracle).abs() < 1e-8 * oracle.abs());
    }

    #[test]
    fn single_component_is_sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = DMatrix::from_fn(40, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let fit = gmm(&x, 1, 2, &mut rng).unwrap();
        let mean = x.row_mean().transpose();
        let centred = DMatrix::from_fn(40, 3, |r, c| x[(r, c)] - mean[c]);
        let mut cov = centred.transpose() * &centred / 40.0;
        for i in 0..3 {
            cov[(i, i)] += COVARIANCE_RIDGE;
        }
        let c = &fit.components[0];
        assert!((&c.mean - mean).amax() < 1e-12);
        assert!((&c.covariance - cov).amax() < 1e-12);
        assert_eq!(c.weight, 1.0);
    }

    #[test]
    fn log_likelihood_non_decreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = DMatrix::from_fn(80, 2, |r, _| (r % 3) as f64 * 2.0 + rng.sample::<f64, _>(StandardNormal));
        let start = lloyd(&x, 3, &mut rng).unwrap();
        let fit = em_from_assignment(&x, 3, &start.assignment).unwrap();
        for w in fit.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * w[0].abs(), "{:?}", w);
        }
    }
}
