//! Full-conditional updates of the rounded Gaussian spatial DP model.
//!
//! Every matrix expression involving `H^{-1} = D - rho W` is evaluated in
//! the eigenbasis of `D - rho W`; since the other term is always a multiple
//! of the identity, `(c I + sigma^{-2} H^{-1})` is diagonal there and
//! determinants, solves and draws cost one basis transform each.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use super::model::{ModelState, Subject};
use super::slice::SliceSampler;
use crate::error::{Error, Result};
use crate::lattice::LatticeGraph;
use crate::linalg::{truncnorm_inverse_cdf, CarEigenbasis};
use crate::sampler::Hyperparams;

/// Log-weights further than this below the maximum are treated as zero.
pub const LOG_WEIGHT_FLOOR: f64 = 700.0;

fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters are positive")
        .sample(rng)
}

/// `IG(shape, rate)` as the reciprocal of a gamma draw.
pub fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    1.0 / draw_gamma(shape, rate, rng).max(f64::MIN_POSITIVE)
}

// --------------------------------------------------------------------- latents

/// Redraws one subject's latents from `N(mu_i, tau2)` truncated to the
/// rounding interval of each observed count, `mu = x beta + gamma theta`.
pub fn redraw_latent<R: Rng + ?Sized>(
    y: &mut [f64],
    z: &[u64],
    shift: f64,
    gamma: f64,
    theta: &[f64],
    tau2: f64,
    rng: &mut R,
) {
    for ((yi, &zi), &th) in y.iter_mut().zip(z).zip(theta) {
        let (lo, hi) = crate::linalg::rounding::interval_of(zi);
        let u: f64 = rng.random();
        let u = if u > 0.0 { u } else { f64::MIN_POSITIVE };
        *yi = truncnorm_inverse_cdf(shift + gamma * th, tau2, lo, hi, u);
    }
}

/// Data-augmentation update of `y_t`.
pub fn update_latent_y<R: Rng + ?Sized>(state: &mut ModelState, subject: &Subject, t: usize, rng: &mut R) {
    let shift = subject.shift(&state.beta);
    let theta = state.atoms.theta(state.w[t]);
    redraw_latent(&mut state.y[t], &subject.z, shift, subject.gamma, theta, state.tau2, rng);
}

// ------------------------------------------------------------------ assignment

fn centered(state: &ModelState, subject: &Subject, t: usize) -> Vec<f64> {
    let shift = subject.shift(&state.beta);
    state.y[t].iter().map(|y| y - shift).collect()
}

/// `log N(r; gamma theta, tau2 I)`.
pub fn log_existing_weight(r: &[f64], gamma: f64, theta: &[f64], tau2: f64) -> f64 {
    let n = r.len() as f64;
    let ss: f64 = r.iter().zip(theta).map(|(ri, th)| (ri - gamma * th).powi(2)).sum();
    -0.5 * n * (2.0 * PI * tau2).ln() - 0.5 * ss / tau2
}

/// `log q0`: the DP precision times the marginal likelihood of `r = y - x beta`
/// with the atom integrated against the CAR base measure.
///
/// With `A = gamma^2/tau2 I + (D - rho W)/sigma2`,
/// `q0 = nu |A^{-1}|^{1/2} |H|^{-1/2} (2 pi sigma2 tau2)^{-n/2}
///       exp(-r'(I - gamma^2/tau2 A^{-1}) r / (2 tau2))`.
pub fn log_new_cluster_weight(
    r: &[f64],
    gamma: f64,
    tau2: f64,
    sigma2: f64,
    nu: f64,
    basis: &CarEigenbasis,
) -> f64 {
    let n = r.len() as f64;
    let c = basis.to_coefficients(r);
    let g = gamma * gamma / tau2;
    let (mut log_det_a, mut log_det_q, mut quad) = (0.0, 0.0, 0.0);
    for (ck, &lk) in c.iter().zip(basis.values()) {
        let a = g + lk / sigma2;
        log_det_a += a.ln();
        log_det_q += lk.ln();
        // ck^2 (1 - g / a) written without cancellation
        quad += ck * ck * (lk / sigma2) / a;
    }
    nu.ln() - 0.5 * log_det_a + 0.5 * log_det_q - 0.5 * n * (2.0 * PI * sigma2 * tau2).ln() - 0.5 * quad / tau2
}

/// Gaussian full conditional of an atom, diagonal in the CAR eigenbasis.
#[derive(Debug, Clone)]
pub struct AtomConditional {
    /// Posterior mean in eigen-coordinates.
    mean_coef: Vec<f64>,
    /// Posterior precision eigenvalues.
    precision: Vec<f64>,
}

impl AtomConditional {
    /// Conditional given members `(gamma_t, y_t - x_t beta)`:
    /// precision `sum gamma^2/tau2 I + H^{-1}/sigma2`, mean
    /// `precision^{-1} sum gamma r / tau2`.
    pub fn new<'a, I>(members: I, tau2: f64, sigma2: f64, basis: &CarEigenbasis) -> Self
    where
        I: IntoIterator<Item = (f64, &'a [f64])>,
    {
        let n = basis.dim();
        let mut weighted = vec![0.0; n];
        let mut gamma_sq = 0.0;
        for (gamma, r) in members {
            gamma_sq += gamma * gamma;
            for (w, ri) in weighted.iter_mut().zip(r) {
                *w += gamma * ri;
            }
        }
        Self::from_sums(gamma_sq, &weighted, tau2, sigma2, basis)
    }

    /// Same conditional from `sum gamma_t^2` and `sum gamma_t r_t`.
    pub fn from_sums(gamma_sq: f64, weighted: &[f64], tau2: f64, sigma2: f64, basis: &CarEigenbasis) -> Self {
        let b = basis.to_coefficients(weighted);
        let precision: Vec<f64> = basis.values().iter().map(|lk| gamma_sq / tau2 + lk / sigma2).collect();
        let mean_coef = b.iter().zip(&precision).map(|(bk, a)| bk / tau2 / a).collect();
        Self { mean_coef, precision }
    }

    pub fn mean(&self, basis: &CarEigenbasis) -> Vec<f64> {
        basis.from_coefficients(&self.mean_coef)
    }

    pub fn covariance(&self, basis: &CarEigenbasis) -> DMatrix<f64> {
        let n = basis.dim();
        let mut cov = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let mut c = basis.to_coefficients(&e);
            for (ck, a) in c.iter_mut().zip(&self.precision) {
                *ck /= a;
            }
            cov.set_column(j, &DVector::from_vec(basis.from_coefficients(&c)));
        }
        cov
    }

    pub fn draw<R: Rng + ?Sized>(&self, basis: &CarEigenbasis, rng: &mut R) -> Vec<f64> {
        let coef: Vec<f64> = self
            .mean_coef
            .iter()
            .zip(&self.precision)
            .map(|(m, a)| m + rng.sample::<f64, _>(StandardNormal) / a.sqrt())
            .collect();
        basis.from_coefficients(&coef)
    }
}

fn sample_log_weights<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> Option<usize> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let weights: Vec<f64> = log_w
        .iter()
        .map(|&lw| if lw < max - LOG_WEIGHT_FLOOR { 0.0 } else { (lw - max).exp() })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return Some(i);
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0)
}

/// Polya-urn reallocation of subject `t`, drawing a fresh atom from the
/// single-subject conditional when a new cluster is opened.
pub fn polya_urn_step<R: Rng + ?Sized>(
    state: &mut ModelState,
    subject: &Subject,
    t: usize,
    basis: &CarEigenbasis,
    rng: &mut R,
) -> Result<()> {
    state.atoms.release(state.w[t]);
    let r = centered(state, subject, t);

    let mut labels = Vec::with_capacity(state.atoms.len() + 1);
    let mut log_w = Vec::with_capacity(state.atoms.len() + 1);
    for (label, atom) in state.atoms.iter() {
        labels.push(Some(label));
        log_w.push((atom.size as f64).ln() + log_existing_weight(&r, subject.gamma, &atom.theta, state.tau2));
    }
    labels.push(None);
    log_w.push(log_new_cluster_weight(
        &r,
        subject.gamma,
        state.tau2,
        state.sigma2,
        state.nu,
        basis,
    ));

    if log_w.iter().any(|w| w.is_nan()) {
        return Err(Error::Numerical(format!(
            "non-finite urn weight for subject {t}: {log_w:?}; {}",
            state.summary()
        )));
    }
    let pick = sample_log_weights(&log_w, rng).ok_or_else(|| {
        Error::Numerical(format!("all urn weights vanish for subject {t}; {}", state.summary()))
    })?;
    state.w[t] = match labels[pick] {
        Some(label) => {
            state.atoms.join(label);
            label
        }
        None => {
            let cond = AtomConditional::new([(subject.gamma, r.as_slice())], state.tau2, state.sigma2, basis);
            state.atoms.insert(cond.draw(basis, rng), 1)
        }
    };
    Ok(())
}

/// Full conditional of the atom with the given label.
pub fn atom_conditional(
    state: &ModelState,
    cohort: &[Subject],
    label: usize,
    basis: &CarEigenbasis,
) -> AtomConditional {
    let members: Vec<(f64, Vec<f64>)> = (0..cohort.len())
        .filter(|&t| state.w[t] == label)
        .map(|t| (cohort[t].gamma, centered(state, &cohort[t], t)))
        .collect();
    AtomConditional::new(
        members.iter().map(|(g, r)| (*g, r.as_slice())),
        state.tau2,
        state.sigma2,
        basis,
    )
}

/// Redraws every live atom given the current configuration.
pub fn resample_atoms<R: Rng + ?Sized>(
    state: &mut ModelState,
    cohort: &[Subject],
    basis: &CarEigenbasis,
    rng: &mut R,
) -> Result<()> {
    let n = basis.dim();
    let labels = state.atoms.labels();
    let slot = |label: usize| labels.binary_search(&label).expect("live label");
    let mut weighted = vec![vec![0.0; n]; labels.len()];
    let mut gamma_sq = vec![0.0; labels.len()];
    for (t, s) in cohort.iter().enumerate() {
        let j = slot(state.w[t]);
        let shift = s.shift(&state.beta);
        gamma_sq[j] += s.gamma * s.gamma;
        for (acc, y) in weighted[j].iter_mut().zip(&state.y[t]) {
            *acc += s.gamma * (y - shift);
        }
    }
    for (j, &label) in labels.iter().enumerate() {
        if gamma_sq[j] == 0.0 {
            return Err(Error::Numerical(format!("atom {label} has no members")));
        }
        let cond = AtomConditional::from_sums(gamma_sq[j], &weighted[j], state.tau2, state.sigma2, basis);
        state.atoms.get_mut(label).expect("live label").theta = cond.draw(basis, rng);
    }
    Ok(())
}

// ------------------------------------------------------------------------ beta

/// Mean and covariance of `beta` given everything else. The scalar
/// `x_t beta` is broadcast over the `n` sites, so the design of subject `t`
/// is `1_n x_t'`.
pub fn beta_conditional(
    state: &ModelState,
    cohort: &[Subject],
    hp: &Hyperparams,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p = hp.beta0.len();
    let prior_prec = hp
        .sigma_beta
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Sigma_beta is singular".into()))?;
    let mut prec = prior_prec.clone();
    let mut rhs = &prior_prec * DVector::from_column_slice(&hp.beta0);
    for (t, s) in cohort.iter().enumerate() {
        let x = DVector::from_column_slice(&s.x);
        let n = s.sites() as f64;
        let theta = state.theta_of(t);
        let resid_sum: f64 = state.y[t].iter().zip(theta).map(|(y, th)| y - s.gamma * th).sum();
        prec += (&x * x.transpose()) * (n / state.tau2);
        rhs += &x * (resid_sum / state.tau2);
    }
    let chol = prec
        .cholesky()
        .ok_or_else(|| Error::Numerical("beta posterior precision not positive definite".into()))?;
    let mean = chol.solve(&rhs);
    let cov = chol.inverse();
    debug_assert_eq!(mean.len(), p);
    Ok((mean, cov))
}

pub fn update_beta<R: Rng + ?Sized>(
    state: &mut ModelState,
    cohort: &[Subject],
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<()> {
    let (mean, cov) = beta_conditional(state, cohort, hp)?;
    let l = cov
        .cholesky()
        .ok_or_else(|| Error::Numerical("beta posterior covariance not positive definite".into()))?
        .unpack();
    let e = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    state.beta = (mean + l * e).as_slice().to_vec();
    Ok(())
}

// ------------------------------------------------------------------------ tau2

/// `(shape, rate)` of the inverse-gamma conditional of `tau2`.
pub fn tau2_conditional(state: &ModelState, cohort: &[Subject], hp: &Hyperparams) -> (f64, f64) {
    let mut ss = 0.0;
    let mut sites = 0usize;
    for (t, s) in cohort.iter().enumerate() {
        ss += state.residual(s, t).iter().map(|r| r * r).sum::<f64>();
        sites += s.sites();
    }
    (sites as f64 / 2.0 + hp.a_tau, hp.b_tau + 0.5 * ss)
}

pub fn update_tau2<R: Rng + ?Sized>(state: &mut ModelState, cohort: &[Subject], hp: &Hyperparams, rng: &mut R) {
    let (shape, rate) = tau2_conditional(state, cohort, hp);
    state.tau2 = draw_inverse_gamma(shape, rate, rng);
}

// ---------------------------------------------------------------------- sigma2

/// `(shape, rate)` of the inverse-gamma conditional of `sigma2`.
pub fn sigma2_conditional(state: &ModelState, graph: &LatticeGraph, hp: &Hyperparams) -> (f64, f64) {
    let quad: f64 = state.atoms.iter().map(|(_, a)| graph.car_form(&a.theta, state.rho)).sum();
    let shape = (state.clusters() * graph.len()) as f64 / 2.0 + hp.a_sigma;
    (shape, hp.b_sigma + 0.5 * quad)
}

pub fn update_sigma2<R: Rng + ?Sized>(state: &mut ModelState, graph: &LatticeGraph, hp: &Hyperparams, rng: &mut R) {
    let (shape, rate) = sigma2_conditional(state, graph, hp);
    state.sigma2 = draw_inverse_gamma(shape, rate, rng);
}

// ------------------------------------------------------------------------- rho

/// Sufficient statistics of the atoms for the `rho` conditional.
#[derive(Debug, Clone, Copy)]
pub struct RhoTarget<'a> {
    spectrum: &'a [f64],
    clusters: f64,
    degree_form: f64,
    adjacency_form: f64,
    sigma2: f64,
}

impl<'a> RhoTarget<'a> {
    pub fn new(state: &ModelState, graph: &'a LatticeGraph) -> Self {
        let (mut dq, mut wq) = (0.0, 0.0);
        for (_, atom) in state.atoms.iter() {
            dq += graph.degree_form(&atom.theta);
            wq += graph.adjacency_form(&atom.theta);
        }
        Self {
            spectrum: graph.normalized_spectrum(),
            clusters: state.clusters() as f64,
            degree_form: dq,
            adjacency_form: wq,
            sigma2: state.sigma2,
        }
    }

    /// `log pi(rho)` up to a constant under the uniform prior:
    /// `(T*/2) sum log(1 - rho lambda_i) - sum_j theta_j'(D - rho W)theta_j / (2 sigma2)`.
    pub fn log_density(&self, rho: f64) -> f64 {
        if !(rho > 0.0 && rho < 1.0) {
            return f64::NEG_INFINITY;
        }
        let log_det: f64 = self.spectrum.iter().map(|&l| (1.0 - rho * l).ln()).sum();
        0.5 * self.clusters * log_det - (self.degree_form - rho * self.adjacency_form) / (2.0 * self.sigma2)
    }
}

/// Slice-sampling transition for `rho` on `(0, 1)`.
pub fn update_rho<R: Rng + ?Sized>(state: &mut ModelState, graph: &LatticeGraph, rng: &mut R) {
    let target = RhoTarget::new(state, graph);
    match SliceSampler::default().step(state.rho, |r| target.log_density(r), rng) {
        Some(rho) => state.rho = rho,
        None => log::warn!("rho slice bracket collapsed; keeping rho = {}", state.rho),
    }
}

// -------------------------------------------------------------------------- nu

/// Mixture-of-gammas conditional of `nu` given the auxiliary `eta`:
/// returns `(p, shape_1, shape_2, rate)`, where `shape_1` is chosen with
/// probability `p`.
pub fn nu_mixture(eta: f64, clusters: usize, subjects: usize, hp: &Hyperparams) -> (f64, f64, f64, f64) {
    let k = clusters as f64;
    let rate = hp.b_nu - eta.ln();
    let odds = hp.a_nu + k - 1.0;
    let p = odds / (subjects as f64 * rate + odds);
    (p, hp.a_nu + k, hp.a_nu + k - 1.0, rate)
}

pub fn update_nu<R: Rng + ?Sized>(state: &mut ModelState, subjects: usize, hp: &Hyperparams, rng: &mut R) {
    let eta: f64 = Beta::new(state.nu + 1.0, subjects as f64)
        .expect("beta parameters are positive")
        .sample(rng);
    let eta = eta.max(f64::MIN_POSITIVE);
    let (p, shape_1, shape_2, rate) = nu_mixture(eta, state.clusters(), subjects, hp);
    let shape = if rng.random::<f64>() < p { shape_1 } else { shape_2 };
    state.nu = if shape > 0.0 {
        draw_gamma(shape, rate, rng).max(f64::MIN_POSITIVE)
    } else {
        f64::MIN_POSITIVE
    };
}
