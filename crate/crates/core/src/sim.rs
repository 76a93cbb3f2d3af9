//! Synthetic co-occurrence cohorts from shifted bivariate normal and
//! skew-normal latent point clouds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::glcm::CountMatrix;

/// Off-diagonal correlation of the generating covariance.
pub const GENERATOR_CORRELATION: f64 = -0.7;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub k: usize,
    pub c_values: Vec<f64>,
    pub s: f64,
    pub subjects_per_class: usize,
    /// Skew-normal shape; `None` draws plain bivariate normals.
    pub skew: Option<[f64; 2]>,
    pub points_per_surface: usize,
    pub total_range: (u64, u64),
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            k: 16,
            c_values: vec![5.0, 5.5, 6.0, 6.5, 7.0],
            s: 10.0,
            subjects_per_class: 20,
            skew: None,
            points_per_surface: 10_000,
            total_range: (500, 20_000),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0) {
            return Err(invalid(format!("scale s must be positive, got {}", self.s)));
        }
        if self.k < 2 || self.c_values.is_empty() || self.subjects_per_class == 0 || self.points_per_surface == 0 {
            return Err(invalid("simulation needs K >= 2, classes, subjects and points"));
        }
        let (lo, hi) = self.total_range;
        if lo == 0 || lo > hi {
            return Err(invalid(format!("bad total-count range [{lo}, {hi}]")));
        }
        Ok(())
    }

    pub fn subjects(&self) -> usize {
        self.c_values.len() * self.subjects_per_class
    }
}

/// Probability surface over `K x K` cells, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSurface {
    k: usize,
    p: Vec<f64>,
}

impl RateSurface {
    pub fn new(k: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != k * k {
            return Err(Error::DimensionMismatch(format!("{} rates for K = {k}", p.len())));
        }
        if p.iter().any(|v| !(*v >= 0.0)) {
            return Err(invalid("rates must be nonnegative"));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("rates sum to {total}, not 1")));
        }
        Ok(Self { k, p })
    }

    pub fn levels(&self) -> usize {
        self.k
    }

    pub fn rates(&self) -> &[f64] {
        &self.p
    }

    pub fn get(&self, l: usize, h: usize) -> f64 {
        self.p[l * self.k + h]
    }
}

/// Generator mean `(2 + c, 14 - c)`.
pub fn generator_mean(c: f64) -> [f64; 2] {
    [2.0 + c, 14.0 - c]
}

/// One latent point for class shift `c` and scale `s`; with `alpha` the
/// deviation from the mean is skew-normal with density
/// `2 phi_2(z; Sigma) Phi(alpha' z)`.
pub fn latent_sample<R: Rng + ?Sized>(c: f64, s: f64, alpha: Option<[f64; 2]>, rng: &mut R) -> [f64; 2] {
    let mu = generator_mean(c);
    let r = GENERATOR_CORRELATION;
    let (e1, e2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
    let sd = s.sqrt();
    match alpha {
        None => [mu[0] + sd * e1, mu[1] + sd * (r * e1 + (1.0 - r * r).sqrt() * e2)],
        Some(a) => {
            // (X0, X) jointly normal with cov(X, X0) = delta; keep X when X0 > 0
            let sigma = [[s, s * r], [s * r, s]];
            let sa = [
                sigma[0][0] * a[0] + sigma[0][1] * a[1],
                sigma[1][0] * a[0] + sigma[1][1] * a[1],
            ];
            let norm = (1.0 + a[0] * sa[0] + a[1] * sa[1]).sqrt();
            let delta = [sa[0] / norm, sa[1] / norm];
            // Cholesky of Sigma - delta delta'
            let c11 = sigma[0][0] - delta[0] * delta[0];
            let c21 = sigma[1][0] - delta[1] * delta[0];
            let c22 = sigma[1][1] - delta[1] * delta[1];
            let l11 = c11.sqrt();
            let l21 = c21 / l11;
            let l22 = (c22 - l21 * l21).max(0.0).sqrt();
            let x0: f64 = rng.sample(StandardNormal);
            let x = [delta[0] * x0 + l11 * e1, delta[1] * x0 + l21 * e1 + l22 * e2];
            let sign = if x0 > 0.0 { 1.0 } else { -1.0 };
            [mu[0] + sign * x[0], mu[1] + sign * x[1]]
        }
    }
}

/// Bins points to the nearest integer cell in `{1..K}^2` and normalizes by
/// the number of in-range points.
pub fn empirical_rate_surface(points: &[[f64; 2]], k: usize) -> Result<RateSurface> {
    if points.is_empty() {
        return Err(invalid("no points to bin"));
    }
    let mut counts = vec![0u64; k * k];
    let mut kept = 0u64;
    let cell = |v: f64| -> Option<usize> {
        let r = v.round();
        (r >= 1.0 && r <= k as f64).then(|| r as usize - 1)
    };
    for p in points {
        if let (Some(l), Some(h)) = (cell(p[0]), cell(p[1])) {
            counts[l * k + h] += 1;
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(invalid("every point fell outside the grid"));
    }
    let p = counts.iter().map(|&c| c as f64 / kept as f64).collect();
    Ok(RateSurface { k, p })
}

/// 3x3 Gaussian smoothing (unit-cell bandwidth) with weights renormalized at
/// the borders, followed by renormalization to unit mass.
pub fn smooth_surface(raw: &RateSurface) -> RateSurface {
    let k = raw.k as isize;
    let weight = |dl: isize, dh: isize| (-((dl * dl + dh * dh) as f64) / 2.0).exp();
    let mut out = vec![0.0; raw.p.len()];
    for l in 0..k {
        for h in 0..k {
            let (mut acc, mut norm) = (0.0, 0.0);
            for dl in -1..=1 {
                for dh in -1..=1 {
                    let (ll, hh) = (l + dl, h + dh);
                    if ll < 0 || hh < 0 || ll >= k || hh >= k {
                        continue;
                    }
                    let w = weight(dl, dh);
                    acc += w * raw.p[(ll * k + hh) as usize];
                    norm += w;
                }
            }
            out[(l * k + h) as usize] = acc / norm;
        }
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    RateSurface { k: raw.k, p: out }
}

/// Scales the surface by a uniform total from `range` and rounds each cell.
pub fn scale_and_round<R: Rng + ?Sized>(surface: &RateSurface, range: (u64, u64), rng: &mut R) -> CountMatrix {
    let total = rng.random_range(range.0..=range.1) as f64;
    let counts = surface.p.iter().map(|&p| (total * p).round() as u64).collect();
    CountMatrix::from_counts(surface.k, counts).expect("surface is square")
}

/// Simulated matrices with 1-based true class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimCohort {
    pub matrices: Vec<CountMatrix>,
    pub labels: Vec<usize>,
}

/// RNG for subject `index` of a cohort seeded with `seed`.
pub fn subject_stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn simulate_subject(cfg: &SimConfig, c: f64, rng: &mut ChaCha8Rng) -> Result<CountMatrix> {
    let points: Vec<[f64; 2]> = (0..cfg.points_per_surface)
        .map(|_| latent_sample(c, cfg.s, cfg.skew, rng))
        .collect();
    let raw = empirical_rate_surface(&points, cfg.k)?;
    Ok(scale_and_round(&smooth_surface(&raw), cfg.total_range, rng))
}

/// Generates `subjects_per_class` matrices for every class shift, in class
/// order.
pub fn generate_cohort(cfg: &SimConfig) -> Result<SimCohort> {
    cfg.validate()?;
    let jobs: Vec<(usize, f64)> = cfg
        .c_values
        .iter()
        .enumerate()
        .flat_map(|(class, &c)| std::iter::repeat_n((class + 1, c), cfg.subjects_per_class))
        .collect();
    let matrices = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(_, c))| simulate_subject(cfg, c, &mut subject_stream(cfg.seed, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimCohort {
        matrices,
        labels: jobs.iter().map(|&(class, _)| class).collect(),
    })
}
