use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::lattice::LatticeGraph;
use crate::linalg::{round_latent, CarEigenbasis};
use crate::sampler::steps::AtomConditional;

/// One subject's lattice counts and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    /// Observed counts at each lattice site.
    pub z: Vec<u64>,
    /// Covariates `x_t`, broadcast to every site.
    pub x: Vec<f64>,
    /// Size scaling factor `gamma_t > 0`.
    pub gamma: f64,
    /// Raw matrix total `N_t`.
    pub total: u64,
}

impl Subject {
    pub fn new(z: Vec<u64>, x: Vec<f64>, gamma: f64, total: u64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("gamma must be positive, got {gamma}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("covariates must be finite"));
        }
        Ok(Self { z, x, gamma, total })
    }

    pub fn sites(&self) -> usize {
        self.z.len()
    }

    pub fn covariates(&self) -> usize {
        self.x.len()
    }

    /// `x_t beta`, the scalar shift shared by every site.
    pub fn shift(&self, beta: &[f64]) -> f64 {
        self.x.iter().zip(beta).map(|(a, b)| a * b).sum()
    }
}

/// Builds subjects from raw lattice counts with the default size handling:
/// `gamma_t = N_t / mean(N)` and covariates `x_t = [N_t]`, optionally with a
/// leading intercept.
pub fn subjects_from_counts(counts: &[Vec<u64>], intercept: bool) -> Result<Vec<Subject>> {
    if counts.is_empty() {
        return Err(invalid("empty cohort"));
    }
    let totals: Vec<u64> = counts.iter().map(|z| z.iter().sum()).collect();
    let mean = totals.iter().sum::<u64>() as f64 / totals.len() as f64;
    if mean <= 0.0 {
        return Err(invalid("cohort has no counts"));
    }
    counts
        .iter()
        .zip(&totals)
        .map(|(z, &n)| {
            let mut x = Vec::with_capacity(2);
            if intercept {
                x.push(1.0);
            }
            x.push(n as f64);
            Subject::new(z.clone(), x, n.max(1) as f64 / mean, n)
        })
        .collect()
}

/// Starting partition for the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitStrategy {
    /// Everyone shares one atom at zero with unit variances.
    OneCluster,
    /// Every subject owns an atom drawn from its single-member conditional,
    /// with `sigma2` started at the data's CAR moment.
    #[default]
    Singletons,
}

impl InitStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::OneCluster => "one_cluster",
            Self::Singletons => "singletons",
        }
    }
}

impl std::fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_cluster" => Ok(Self::OneCluster),
            "singletons" => Ok(Self::Singletons),
            other => Err(invalid(format!("unknown init strategy {other:?}"))),
        }
    }
}

/// Prior parameters and chain settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub beta0: Vec<f64>,
    pub sigma_beta: DMatrix<f64>,
    pub a_tau: f64,
    pub b_tau: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_nu: f64,
    pub b_nu: f64,
    pub n_iter: usize,
    pub n_burn: usize,
    pub seed: u64,
    pub init: InitStrategy,
}

impl Hyperparams {
    /// Vague defaults: `beta0 = 0`, `Sigma_beta = 1e5 I`, inverse-gamma
    /// shapes and rates of `1e-4`, `Gamma(1, 1)` on the DP precision, and a
    /// 20000-iteration chain with half discarded.
    pub fn vague(p: usize) -> Self {
        Self {
            beta0: vec![0.0; p],
            sigma_beta: DMatrix::identity(p, p) * 1e5,
            a_tau: 1e-4,
            b_tau: 1e-4,
            a_sigma: 1e-4,
            b_sigma: 1e-4,
            a_nu: 1.0,
            b_nu: 1.0,
            n_iter: 20_000,
            n_burn: 10_000,
            seed: 0,
            init: InitStrategy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.beta0.len();
        if self.sigma_beta.shape() != (p, p) {
            return Err(Error::DimensionMismatch(format!(
                "Sigma_beta is {:?}, beta0 has length {p}",
                self.sigma_beta.shape()
            )));
        }
        if self.sigma_beta.clone().cholesky().is_none() {
            return Err(invalid("Sigma_beta must be positive definite"));
        }
        let positive = [
            ("a_tau", self.a_tau),
            ("b_tau", self.b_tau),
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a_nu", self.a_nu),
            ("b_nu", self.b_nu),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_burn >= self.n_iter {
            return Err(invalid(format!(
                "burn-in ({}) must be shorter than the chain ({})",
                self.n_burn, self.n_iter
            )));
        }
        Ok(())
    }
}

/// A cluster atom and its membership count.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub theta: Vec<f64>,
    pub size: usize,
}

/// Live cluster atoms addressed by reusable slot labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AtomStore {
    slots: Vec<Option<Atom>>,
    free: Vec<usize>,
}

impl AtomStore {
    pub fn insert(&mut self, theta: Vec<f64>, size: usize) -> usize {
        let atom = Some(Atom { theta, size });
        match self.free.pop() {
            Some(label) => {
                self.slots[label] = atom;
                label
            }
            None => {
                self.slots.push(atom);
                self.slots.len() - 1
            }
        }
    }

    pub fn get(&self, label: usize) -> Option<&Atom> {
        self.slots.get(label).and_then(Option::as_ref)
    }

    pub fn get_mut(&mut self, label: usize) -> Option<&mut Atom> {
        self.slots.get_mut(label).and_then(Option::as_mut)
    }

    pub fn theta(&self, label: usize) -> &[f64] {
        &self.slots[label].as_ref().expect("dead atom label").theta
    }

    /// Drops one member; the atom is deleted when it empties.
    pub fn release(&mut self, label: usize) {
        let slot = &mut self.slots[label];
        let atom = slot.as_mut().expect("dead atom label");
        atom.size -= 1;
        if atom.size == 0 {
            *slot = None;
            self.free.push(label);
        }
    }

    pub fn join(&mut self, label: usize) {
        self.get_mut(label).expect("dead atom label").size += 1;
    }

    pub fn len(&self) -> usize {
        self.slots.len() - self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(label, atom)` for every live atom, in label order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Atom)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.as_ref().map(|a| (i, a)))
    }

    pub fn labels(&self) -> Vec<usize> {
        self.iter().map(|(l, _)| l).collect()
    }
}

/// One MCMC state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// Latent reals, one row per subject.
    pub y: Vec<Vec<f64>>,
    /// Cluster label of each subject.
    pub w: Vec<usize>,
    pub atoms: AtomStore,
    pub beta: Vec<f64>,
    pub tau2: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub nu: f64,
}

impl ModelState {
    pub fn subjects(&self) -> usize {
        self.w.len()
    }

    pub fn clusters(&self) -> usize {
        self.atoms.len()
    }

    /// The atom subject `t` currently uses.
    pub fn theta_of(&self, t: usize) -> &[f64] {
        self.atoms.theta(self.w[t])
    }

    /// Residual `y_t - x_t beta - gamma_t theta_{w_t}`.
    pub fn residual(&self, subject: &Subject, t: usize) -> Vec<f64> {
        let shift = subject.shift(&self.beta);
        let theta = self.theta_of(t);
        self.y[t]
            .iter()
            .zip(theta)
            .map(|(y, th)| y - shift - subject.gamma * th)
            .collect()
    }

    /// Verifies latent truncation and partition bookkeeping.
    pub fn check_invariants(&self, cohort: &[Subject]) -> Result<()> {
        let fail = |m: String| Err(Error::Numerical(m));
        if self.y.len() != cohort.len() || self.w.len() != cohort.len() {
            return fail("state and cohort disagree on subject count".into());
        }
        for (t, (row, s)) in self.y.iter().zip(cohort).enumerate() {
            for (i, (&y, &z)) in row.iter().zip(&s.z).enumerate() {
                if round_latent(y) != z {
                    return fail(format!("subject {t} site {i}: latent {y} does not round to {z}"));
                }
            }
        }
        let mut sizes = std::collections::BTreeMap::new();
        for (t, &label) in self.w.iter().enumerate() {
            if self.atoms.get(label).is_none() {
                return fail(format!("subject {t} points at dead atom {label}"));
            }
            *sizes.entry(label).or_insert(0usize) += 1;
        }
        if sizes.len() != self.atoms.len() {
            return fail(format!(
                "{} live atoms but {} occupied labels",
                self.atoms.len(),
                sizes.len()
            ));
        }
        for (label, atom) in self.atoms.iter() {
            if sizes.get(&label) != Some(&atom.size) {
                return fail(format!("atom {label} records size {} incorrectly", atom.size));
            }
        }
        if !(self.tau2 > 0.0 && self.sigma2 > 0.0 && self.nu > 0.0 && self.rho > 0.0 && self.rho < 1.0) {
            return fail(format!(
                "scalar parameters out of support: tau2={} sigma2={} rho={} nu={}",
                self.tau2, self.sigma2, self.rho, self.nu
            ));
        }
        Ok(())
    }

    pub(crate) fn summary(&self) -> String {
        format!(
            "beta={:?} tau2={:.6e} sigma2={:.6e} rho={:.6} nu={:.6} clusters={}",
            self.beta,
            self.tau2,
            self.sigma2,
            self.rho,
            self.nu,
            self.clusters()
        )
    }
}

/// Initial state: latents at interval midpoints (`-0.5` for zero counts),
/// everyone in one cluster at `theta = 0`, `beta = beta0`,
/// `tau2 = sigma2 = 1`, `rho = 0.5`, `nu = 1`.
pub fn init_state(cohort: &[Subject], graph: &LatticeGraph, hp: &Hyperparams) -> Result<ModelState> {
    let first = cohort.first().ok_or_else(|| invalid("empty cohort"))?;
    let (n, p) = (graph.len(), hp.beta0.len());
    for (t, s) in cohort.iter().enumerate() {
        if s.sites() != n {
            return Err(Error::DimensionMismatch(format!(
                "subject {t} has {} sites, lattice has {n}",
                s.sites()
            )));
        }
        if s.covariates() != first.covariates() || s.covariates() != p {
            return Err(Error::DimensionMismatch(format!(
                "subject {t} has {} covariates, prior expects {p}",
                s.covariates()
            )));
        }
    }
    let y = cohort
        .iter()
        .map(|s| {
            s.z.iter()
                .map(|&z| if z == 0 { -0.5 } else { z as f64 - 0.5 })
                .collect()
        })
        .collect();
    let mut atoms = AtomStore::default();
    let label = atoms.insert(vec![0.0; n], cohort.len());
    Ok(ModelState {
        y,
        w: vec![label; cohort.len()],
        atoms,
        beta: hp.beta0.clone(),
        tau2: 1.0,
        sigma2: 1.0,
        rho: 0.5,
        nu: 1.0,
    })
}

/// One atom per subject. With `r_t = y_t - x_t beta0` at the midpoint
/// latents:
/// - `tau2` starts at the residual variance of the least-squares common
///   surface `theta_bar = sum gamma_t r_t / sum gamma_t^2`;
/// - `sigma2` starts at `sum_t (r_t/gamma_t)' Q (r_t/gamma_t) / (T n)` under
///   `Q = D - 0.5 W`;
/// - each atom is a draw from its subject's conditional at those values.
///
/// Other fields follow [`init_state`]. Starting with every subject apart
/// and the noise variance at its no-structure level lets the urn merge
/// subjects as the data support, rather than locking in a coarse partition
/// formed while the variances are still far off.
pub fn init_singletons<R: Rng + ?Sized>(
    cohort: &[Subject],
    graph: &LatticeGraph,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<ModelState> {
    let mut state = init_state(cohort, graph, hp)?;
    let residuals: Vec<Vec<f64>> = cohort.iter().enumerate().map(|(t, s)| state.residual(s, t)).collect();
    let moment: f64 = cohort
        .iter()
        .zip(&residuals)
        .map(|(s, r)| {
            let scaled: Vec<f64> = r.iter().map(|v| v / s.gamma).collect();
            graph.car_form(&scaled, state.rho)
        })
        .sum::<f64>()
        / (cohort.len() * graph.len()) as f64;
    if moment.is_finite() && moment > 0.0 {
        state.sigma2 = moment;
    }
    let gamma_sq: f64 = cohort.iter().map(|s| s.gamma * s.gamma).sum();
    let n = graph.len();
    let common: Vec<f64> = (0..n)
        .map(|i| cohort.iter().zip(&residuals).map(|(s, r)| s.gamma * r[i]).sum::<f64>() / gamma_sq)
        .collect();
    let spread: f64 = cohort
        .iter()
        .zip(&residuals)
        .map(|(s, r)| r.iter().zip(&common).map(|(ri, ci)| (ri - s.gamma * ci).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (cohort.len() * n) as f64;
    if spread.is_finite() && spread > 0.0 {
        state.tau2 = spread;
    }
    let basis = CarEigenbasis::new(graph, state.rho);
    let mut atoms = AtomStore::default();
    state.w = cohort
        .iter()
        .zip(&residuals)
        .map(|(s, r)| {
            let theta = AtomConditional::new([(s.gamma, r.as_slice())], state.tau2, state.sigma2, &basis).draw(&basis, rng);
            atoms.insert(theta, 1)
        })
        .collect();
    state.atoms = atoms;
    Ok(state)
}
