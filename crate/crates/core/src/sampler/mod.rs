//! MCMC for the hierarchical rounded Gaussian spatial Dirichlet process.

mod chain;
mod diagnostics;
mod model;
mod slice;
pub mod steps;


pub use chain::{run_chain, run_chain_with, ChainTrace, Sampler, TraceRecord};
pub use diagnostics::{geweke_z, GEWEKE_VARIANCE_FLOOR};
pub use model::{init_singletons, init_state, subjects_from_counts, InitStrategy, Atom, AtomStore, Hyperparams, ModelState, Subject};
pub use slice::SliceSampler;
pub use steps::{
    atom_conditional, beta_conditional, log_existing_weight, log_new_cluster_weight, nu_mixture, polya_urn_step,
    resample_atoms, sigma2_conditional, tau2_conditional, update_beta, update_latent_y, update_nu, update_rho,
    update_sigma2, update_tau2, AtomConditional, RhoTarget,
};
