//! Texture-feature baselines: Haralick summaries clustered by Ward,
//! k-means or a Gaussian mixture.

mod features;
mod gmm;
mod kmeans;

pub use features::{feature_matrix, haralick_features, FeatureVector, FEATURE_NAMES};
pub use gmm::{gmm, mixture_log_likelihood, GaussianComponent, GmmFit, COVARIANCE_RIDGE, GMM_MAX_ITERATIONS, GMM_RESTARTS};
pub use kmeans::{kmeans, lloyd, KMeansFit, KMEANS_RESTARTS};

use rand::Rng;

use crate::cluster::{dissimilarity, ward_cluster, Partition};
use crate::error::Result;

/// Baseline clusterer selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineMethod {
    Hierarchical,
    KMeans,
    Mixture,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 3] = [Self::Hierarchical, Self::KMeans, Self::Mixture];

    pub fn name(self) -> &'static str {
        match self {
            Self::Hierarchical => "FeaHC",
            Self::KMeans => "FeaKM",
            Self::Mixture => "FeaGMM",
        }
    }
}

impl std::str::FromStr for BaselineMethod {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hc" | "feahc" => Ok(Self::Hierarchical),
            "km" | "feakm" => Ok(Self::KMeans),
            "gmm" | "feagmm" => Ok(Self::Mixture),
            other => Err(crate::error::invalid(format!("unknown baseline method {other:?}"))),
        }
    }
}

/// Ward tree on (optionally standardized) features, cut at `g`.
pub fn feature_hclust(features: &[FeatureVector], g: usize, standardize: bool) -> Result<Partition> {
    let x = feature_matrix(features, standardize)?;
    ward_cluster(&dissimilarity(&x)?)?.cut(g)
}

pub fn feature_kmeans<R: Rng + ?Sized>(features: &[FeatureVector], g: usize, standardize: bool, rng: &mut R) -> Result<Partition> {
    let x = feature_matrix(features, standardize)?;
    Ok(Partition::from_labels(&kmeans(&x, g, KMEANS_RESTARTS, rng)?.assignment))
}

pub fn feature_gmm<R: Rng + ?Sized>(features: &[FeatureVector], g: usize, standardize: bool, rng: &mut R) -> Result<Partition> {
    let x = feature_matrix(features, standardize)?;
    Ok(Partition::from_labels(&gmm(&x, g, GMM_RESTARTS, rng)?.assignment))
}

pub fn run_baseline<R: Rng + ?Sized>(
    method: BaselineMethod,
    features: &[FeatureVector],
    g: usize,
    standardize: bool,
    rng: &mut R,
) -> Result<Partition> {
    match method {
        BaselineMethod::Hierarchical => feature_hclust(features, g, standardize),
        BaselineMethod::KMeans => feature_kmeans(features, g, standardize, rng),
        BaselineMethod::Mixture => feature_gmm(features, g, standardize, rng),
    }
}
