use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{init_singletons, init_state, Hyperparams, InitStrategy, ModelState, Subject};
use super::steps::{
    polya_urn_step, redraw_latent, resample_atoms, update_beta, update_nu, update_rho, update_sigma2,
    update_tau2,
};
use crate::error::{Error, Result};
use crate::lattice::LatticeGraph;
use crate::linalg::CarEigenbasis;

/// Scalar parameters and labels of one retained iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub beta: Vec<f64>,
    pub tau2: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub nu: f64,
    pub clusters: usize,
    pub labels: Vec<usize>,
}

/// Post-burn-in output of a chain with streaming per-subject atom sums.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub records: Vec<TraceRecord>,
    theta_sums: Vec<Vec<f64>>,
}

impl ChainTrace {
    pub fn new(subjects: usize, sites: usize) -> Self {
        Self {
            records: Vec::new(),
            theta_sums: vec![vec![0.0; sites]; subjects],
        }
    }

    /// Appends the state's scalars and adds each subject's atom to its sum.
    pub fn record(&mut self, iteration: usize, state: &ModelState) {
        for (t, sum) in self.theta_sums.iter_mut().enumerate() {
            for (acc, th) in sum.iter_mut().zip(state.theta_of(t)) {
                *acc += th;
            }
        }
        self.records.push(TraceRecord {
            iteration,
            beta: state.beta.clone(),
            tau2: state.tau2,
            sigma2: state.sigma2,
            rho: state.rho,
            nu: state.nu,
            clusters: state.clusters(),
            labels: state.w.clone(),
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn theta_sums(&self) -> &[Vec<f64>] {
        &self.theta_sums
    }

    pub fn subjects(&self) -> usize {
        self.theta_sums.len()
    }

    /// Named scalar series: `beta_<k>` (1-based), `tau2`, `sigma2`, `rho`,
    /// `nu`, or `clusters`.
    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let pick: Box<dyn Fn(&TraceRecord) -> f64> = match name {
            "tau2" => Box::new(|r| r.tau2),
            "sigma2" => Box::new(|r| r.sigma2),
            "rho" => Box::new(|r| r.rho),
            "nu" => Box::new(|r| r.nu),
            "clusters" => Box::new(|r| r.clusters as f64),
            other => {
                let k: usize = other.strip_prefix("beta_")?.parse().ok()?;
                let idx = k.checked_sub(1)?;
                if self.records.first().is_some_and(|r| idx >= r.beta.len()) {
                    return None;
                }
                Box::new(move |r| r.beta[idx])
            }
        };
        Some(self.records.iter().map(pick).collect())
    }

    /// Names of every scalar series, betas first.
    pub fn series_names(&self) -> Vec<String> {
        let p = self.records.first().map_or(0, |r| r.beta.len());
        (1..=p)
            .map(|k| format!("beta_{k}"))
            .chain(["tau2", "sigma2", "rho", "nu"].map(String::from))
            .collect()
    }
}

/// Stream reserved for drawing the starting state; 0 is the global stream
/// and `t + 1` belongs to subject `t`.
const INIT_STREAM: u64 = u64::MAX;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Gibbs sampler over a fixed cohort.
///
/// Randomness is split into one stream per subject (latent and allocation
/// updates) plus a global stream, all derived from the seed, so results do
/// not depend on how the latent update is scheduled across threads.
pub struct Sampler<'a> {
    cohort: &'a [Subject],
    graph: &'a LatticeGraph,
    hp: &'a Hyperparams,
    state: ModelState,
    rng: ChaCha8Rng,
    subject_rngs: Vec<ChaCha8Rng>,
    iteration: usize,
}

impl<'a> Sampler<'a> {
    pub fn new(cohort: &'a [Subject], graph: &'a LatticeGraph, hp: &'a Hyperparams) -> Result<Self> {
        hp.validate()?;
        let state = match hp.init {
            InitStrategy::OneCluster => init_state(cohort, graph, hp)?,
            InitStrategy::Singletons => init_singletons(cohort, graph, hp, &mut stream(hp.seed, INIT_STREAM))?,
        };
        Self::with_state(cohort, graph, hp, state)
    }

    /// Starts from a caller-supplied state, which must satisfy
    /// [`ModelState::check_invariants`].
    pub fn with_state(cohort: &'a [Subject], graph: &'a LatticeGraph, hp: &'a Hyperparams, state: ModelState) -> Result<Self> {
        hp.validate()?;
        state.check_invariants(cohort)?;
        let stream = |id: u64| stream(hp.seed, id);
        Ok(Self {
            cohort,
            graph,
            hp,
            state,
            rng: stream(0),
            subject_rngs: (0..cohort.len() as u64).map(|t| stream(t + 1)).collect(),
            iteration: 0,
        })
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One full sweep over all conditionals.
    pub fn sweep(&mut self) -> Result<()> {
        let cohort = self.cohort;
        let ModelState { y, w, atoms, beta, tau2, .. } = &mut self.state;
        let (atoms, beta, tau2) = (&*atoms, &*beta, *tau2);
        y.par_iter_mut()
            .zip(self.subject_rngs.par_iter_mut())
            .enumerate()
            .for_each(|(t, (yt, rng))| {
                let s = &cohort[t];
                redraw_latent(yt, &s.z, s.shift(beta), s.gamma, atoms.theta(w[t]), tau2, rng);
            });

        let basis = CarEigenbasis::new(self.graph, self.state.rho);
        for (t, s) in cohort.iter().enumerate() {
            polya_urn_step(&mut self.state, s, t, &basis, &mut self.subject_rngs[t])?;
        }
        resample_atoms(&mut self.state, cohort, &basis, &mut self.rng)?;
        update_beta(&mut self.state, cohort, self.hp, &mut self.rng)?;
        update_tau2(&mut self.state, cohort, self.hp, &mut self.rng);
        update_sigma2(&mut self.state, self.graph, self.hp, &mut self.rng);
        update_rho(&mut self.state, self.graph, &mut self.rng);
        update_nu(&mut self.state, cohort.len(), self.hp, &mut self.rng);
        self.iteration += 1;
        #[cfg(debug_assertions)]
        self.state.check_invariants(cohort)?;
        Ok(())
    }
}

/// Runs the chain and keeps every post-burn-in iteration.
pub fn run_chain(cohort: &[Subject], graph: &LatticeGraph, hp: &Hyperparams) -> Result<ChainTrace> {
    run_chain_with(cohort, graph, hp, |_, _| Ok(()))
}

/// As [`run_chain`], calling `observer(iteration, state)` after every sweep
/// (burn-in included). An observer error aborts the run.
pub fn run_chain_with<F>(cohort: &[Subject], graph: &LatticeGraph, hp: &Hyperparams, mut observer: F) -> Result<ChainTrace>
where
    F: FnMut(usize, &ModelState) -> Result<()>,
{
    let mut sampler = Sampler::new(cohort, graph, hp)?;
    let mut trace = ChainTrace::new(cohort.len(), graph.len());
    for it in 1..=hp.n_iter {
        let wrap = |e: Error, state: &ModelState| Error::Sampler {
            iteration: it,
            message: format!("{e}; state: {}", state.summary()),
        };
        if let Err(e) = sampler.sweep() {
            return Err(wrap(e, sampler.state()));
        }
        observer(it, sampler.state()).map_err(|e| wrap(e, sampler.state()))?;
        if it > hp.n_burn {
            trace.record(it, sampler.state());
        }
    }
    Ok(trace)
}
