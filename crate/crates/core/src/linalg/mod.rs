//! CAR precision structure, Gaussian sampling, and the latent rounding map.

mod car;
mod eigenbasis;
pub(crate) mod rounding;
mod truncnorm;

pub use car::{car_precision, sample_mvn_precision, CarPrecision};
pub use eigenbasis::CarEigenbasis;
pub use rounding::{count_interval, round_latent};
pub use truncnorm::{normal_cdf, normal_quantile, truncnorm_inverse_cdf, TAIL_MASS_FLOOR};
