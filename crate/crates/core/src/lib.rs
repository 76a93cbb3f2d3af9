pub mod baselines;
pub mod cluster;
pub mod error;
pub mod glcm;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod sampler;
pub mod sim;

pub use error::{Error, ErrorKind, Result};
