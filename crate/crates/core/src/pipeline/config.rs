use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::glcm::{GlcmOptions, Neighborhood};
use crate::io::{parse_key_values, read_text, SurfaceFormat};
use crate::lattice::LatticeMode;
use crate::sampler::{Hyperparams, InitStrategy};
use crate::sim::SimConfig;

/// Preset scale of chains and simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// 10 subjects per class, 4000 sweeps (2000 burn-in), 4000 points per
    /// simulated surface, 10 replicates.
    Desk,
    /// 20 subjects per class, 20000 sweeps (10000 burn-in), 10000 points,
    /// 100 replicates.
    Full,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Desk => "desk",
            Self::Full => "full",
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "full" => Ok(Self::Full),
            other => Err(invalid(format!("unknown profile {other:?}"))),
        }
    }
}

/// Every configuration key with a one-line description, in canonical order.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("profile", "desk | full; sets defaults for the keys below, applied before them"),
    ("seed", "master RNG seed for chains, simulations and baselines"),
    ("n_iter", "total sampler sweeps"),
    ("n_burn", "sweeps discarded before recording"),
    ("init", "chain start: singletons | one_cluster"),
    ("beta0", "prior mean of every regression coefficient"),
    ("sigma_beta", "prior variance of every coefficient (covariance is this times I)"),
    ("a_tau", "inverse-gamma shape for tau2"),
    ("b_tau", "inverse-gamma rate for tau2"),
    ("a_sigma", "inverse-gamma shape for sigma2"),
    ("b_sigma", "inverse-gamma rate for sigma2"),
    ("a_nu", "gamma shape for the DP precision"),
    ("b_nu", "gamma rate for the DP precision"),
    ("intercept", "add an intercept column to the covariates (true | false)"),
    ("lattice", "full_grid | unique_triangle, used when a manifest does not say"),
    ("levels", "gray levels K for build-glcm"),
    ("clip_lo", "lower clipping quantile for gray-level bins"),
    ("clip_hi", "upper clipping quantile for gray-level bins"),
    ("offset", "GLCM pixel offset"),
    ("neighborhood", "GLCM neighbourhood: 4 | 8"),
    ("g_max", "largest cluster count scored by the KL rank, or auto"),
    ("g", "cut the tree at this many clusters instead of the KL rank, or auto"),
    ("baseline_g", "cluster count given to the feature baselines"),
    ("standardize", "z-score baseline features (true | false)"),
    ("surface_format", "csv | binary"),
    ("geweke_first", "leading fraction of the trace compared by Geweke"),
    ("geweke_last", "trailing fraction of the trace compared by Geweke"),
    ("sim_k", "gray levels of simulated matrices"),
    ("sim_c", "class shifts, ';'-separated"),
    ("sim_s", "covariance scale of simulated point clouds"),
    ("sim_per_class", "simulated subjects per class"),
    ("sim_points", "latent points per simulated surface"),
    ("sim_total_min", "smallest simulated matrix total"),
    ("sim_total_max", "largest simulated matrix total"),
    ("sim_skew", "skew-normal shapes a;b, or none"),
    ("s_values", "scales swept by replicate, ';'-separated"),
    ("replicates", "replicates per scale"),
];

/// Parameters shared by every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub n_iter: usize,
    pub n_burn: usize,
    pub init: InitStrategy,
    pub beta0: f64,
    pub sigma_beta: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_nu: f64,
    pub b_nu: f64,
    pub intercept: bool,
    pub lattice: LatticeMode,
    pub levels: usize,
    pub clip: (f64, f64),
    pub glcm: GlcmOptions,
    pub g_max: Option<usize>,
    pub g: Option<usize>,
    pub baseline_g: usize,
    pub standardize: bool,
    pub surface_format: SurfaceFormat,
    pub geweke: (f64, f64),
    pub sim: SimConfig,
    pub s_values: Vec<f64>,
    pub replicates: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Desk)
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| invalid(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(format!("bad value {value:?} for {key}; expected true or false"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = value.split(';').map(|x| parse(key, x.trim())).collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(invalid(format!("{key} needs at least one value")));
    }
    Ok(v)
}

fn parse_auto(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show_list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn show_auto(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".to_string(), |g| g.to_string())
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let hp = Hyperparams::vague(1);
        let (per_class, n_iter, points, replicates) = match profile {
            Profile::Desk => (10, 4000, 4000, 10),
            Profile::Full => (20, 20_000, 10_000, 100),
        };
        Self {
            profile,
            seed: 1,
            n_iter,
            n_burn: n_iter / 2,
            init: InitStrategy::default(),
            beta0: 0.0,
            sigma_beta: hp.sigma_beta[(0, 0)],
            a_tau: hp.a_tau,
            b_tau: hp.b_tau,
            a_sigma: hp.a_sigma,
            b_sigma: hp.b_sigma,
            a_nu: hp.a_nu,
            b_nu: hp.b_nu,
            intercept: false,
            lattice: LatticeMode::FullGrid,
            levels: 16,
            clip: (0.025, 0.975),
            glcm: GlcmOptions::default(),
            g_max: None,
            g: None,
            baseline_g: 5,
            standardize: true,
            surface_format: SurfaceFormat::Csv,
            geweke: (0.1, 0.5),
            sim: SimConfig {
                subjects_per_class: per_class,
                points_per_surface: points,
                ..SimConfig::default()
            },
            s_values: vec![10.0, 15.0, 17.0],
            replicates,
        }
    }

    /// Builds a config from ordered pairs. `profile` is applied first
    /// wherever it appears; later pairs override earlier ones.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let profile = match pairs.iter().rev().find(|(k, _)| k == "profile") {
            Some((_, v)) => v.parse()?,
            None => Profile::Desk,
        };
        let mut cfg = Self::for_profile(profile);
        for (k, v) in pairs.iter().filter(|(k, _)| k != "profile") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a `key=value` file, then applies `overrides` on top.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = match path {
            Some(p) => parse_key_values(&read_text(p)?, p)?,
            None => Vec::new(),
        };
        pairs.extend_from_slice(overrides);
        Self::from_pairs(&pairs)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "profile" => {
                let seed = self.seed;
                *self = Self::for_profile(parse(key, v)?);
                self.seed = seed;
            }
            "seed" => self.seed = parse(key, v)?,
            "n_iter" => self.n_iter = parse(key, v)?,
            "n_burn" => self.n_burn = parse(key, v)?,
            "init" => self.init = v.parse()?,
            "beta0" => self.beta0 = parse(key, v)?,
            "sigma_beta" => self.sigma_beta = parse(key, v)?,
            "a_tau" => self.a_tau = parse(key, v)?,
            "b_tau" => self.b_tau = parse(key, v)?,
            "a_sigma" => self.a_sigma = parse(key, v)?,
            "b_sigma" => self.b_sigma = parse(key, v)?,
            "a_nu" => self.a_nu = parse(key, v)?,
            "b_nu" => self.b_nu = parse(key, v)?,
            "intercept" => self.intercept = parse_bool(key, v)?,
            "lattice" => self.lattice = v.parse()?,
            "levels" => self.levels = parse(key, v)?,
            "clip_lo" => self.clip.0 = parse(key, v)?,
            "clip_hi" => self.clip.1 = parse(key, v)?,
            "offset" => self.glcm.offset = parse(key, v)?,
            "neighborhood" => {
                self.glcm.neighborhood = match v {
                    "4" => Neighborhood::Four,
                    "8" => Neighborhood::Eight,
                    _ => return Err(invalid(format!("neighborhood must be 4 or 8, got {v:?}"))),
                }
            }
            "g_max" => self.g_max = parse_auto(key, v)?,
            "g" => self.g = parse_auto(key, v)?,
            "baseline_g" => self.baseline_g = parse(key, v)?,
            "standardize" => self.standardize = parse_bool(key, v)?,
            "surface_format" => self.surface_format = v.parse()?,
            "geweke_first" => self.geweke.0 = parse(key, v)?,
            "geweke_last" => self.geweke.1 = parse(key, v)?,
            "sim_k" => self.sim.k = parse(key, v)?,
            "sim_c" => self.sim.c_values = parse_list(key, v)?,
            "sim_s" => self.sim.s = parse(key, v)?,
            "sim_per_class" => self.sim.subjects_per_class = parse(key, v)?,
            "sim_points" => self.sim.points_per_surface = parse(key, v)?,
            "sim_total_min" => self.sim.total_range.0 = parse(key, v)?,
            "sim_total_max" => self.sim.total_range.1 = parse(key, v)?,
            "sim_skew" => {
                self.sim.skew = if v == "none" {
                    None
                } else {
                    match parse_list(key, v)?.as_slice() {
                        &[a, b] => Some([a, b]),
                        _ => return Err(invalid("sim_skew needs two values a;b")),
                    }
                }
            }
            "s_values" => self.s_values = parse_list(key, v)?,
            "replicates" => self.replicates = parse(key, v)?,
            other => return Err(invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_burn >= self.n_iter {
            return Err(invalid(format!("n_burn ({}) must be below n_iter ({})", self.n_burn, self.n_iter)));
        }
        if self.levels < 2 {
            return Err(invalid("levels must be at least 2"));
        }
        let (a, b) = self.geweke;
        if !(a > 0.0 && b > 0.0 && a + b <= 1.0) {
            return Err(invalid(format!("bad Geweke fractions ({a}, {b})")));
        }
        if self.baseline_g < 1 || self.g == Some(0) {
            return Err(invalid("cluster counts must be positive"));
        }
        self.hyperparams(1).validate()?;
        self.sim.validate()
    }

    /// Sampler settings for `p` covariates.
    pub fn hyperparams(&self, p: usize) -> Hyperparams {
        Hyperparams {
            beta0: vec![self.beta0; p],
            sigma_beta: DMatrix::identity(p, p) * self.sigma_beta,
            a_tau: self.a_tau,
            b_tau: self.b_tau,
            a_sigma: self.a_sigma,
            b_sigma: self.b_sigma,
            a_nu: self.a_nu,
            b_nu: self.b_nu,
            n_iter: self.n_iter,
            n_burn: self.n_burn,
            seed: self.seed,
            init: self.init,
        }
    }

    /// Canonical `(key, value)` list in [`CONFIG_KEYS`] order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let neighborhood = match self.glcm.neighborhood {
            Neighborhood::Four => "4",
            Neighborhood::Eight => "8",
        };
        let skew = self.sim.skew.map_or_else(|| "none".to_string(), |s| show_list(&s));
        let values = [
            self.profile.as_str().to_string(),
            self.seed.to_string(),
            self.n_iter.to_string(),
            self.n_burn.to_string(),
            self.init.to_string(),
            self.beta0.to_string(),
            self.sigma_beta.to_string(),
            self.a_tau.to_string(),
            self.b_tau.to_string(),
            self.a_sigma.to_string(),
            self.b_sigma.to_string(),
            self.a_nu.to_string(),
            self.b_nu.to_string(),
            self.intercept.to_string(),
            self.lattice.to_string(),
            self.levels.to_string(),
            self.clip.0.to_string(),
            self.clip.1.to_string(),
            self.glcm.offset.to_string(),
            neighborhood.to_string(),
            show_auto(self.g_max),
            show_auto(self.g),
            self.baseline_g.to_string(),
            self.standardize.to_string(),
            self.surface_format.as_str().to_string(),
            self.geweke.0.to_string(),
            self.geweke.1.to_string(),
            self.sim.k.to_string(),
            show_list(&self.sim.c_values),
            self.sim.s.to_string(),
            self.sim.subjects_per_class.to_string(),
            self.sim.points_per_surface.to_string(),
            self.sim.total_range.0.to_string(),
            self.sim.total_range.1.to_string(),
            skew,
            show_list(&self.s_values),
            self.replicates.to_string(),
        ];
        debug_assert_eq!(values.len(), CONFIG_KEYS.len());
        CONFIG_KEYS
            .iter()
            .zip(values)
            .map(|((k, _), v)| (k.to_string(), v))
            .collect()
    }

    /// First 16 hex digits of the SHA-256 of the canonical key list.
    pub fn hash(&self) -> String {
        let mut text = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(text, "{k}={v}");
        }
        hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
    }

    /// `config_hash` and `seed` entries stamped on every artifact.
    pub fn stamp(&self) -> Vec<(&'static str, String)> {
        vec![("config_hash", self.hash()), ("seed", self.seed.to_string())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn desk_profile_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.sim.subjects(), 50);
        assert_eq!((cfg.n_iter, cfg.n_burn, cfg.sim.points_per_surface), (4000, 2000, 4000));
        let hp = cfg.hyperparams(1);
        assert_eq!(hp.sigma_beta[(0, 0)], 1e5);
        assert_eq!((hp.a_tau, hp.b_tau, hp.a_sigma, hp.b_sigma), (1e-4, 1e-4, 1e-4, 1e-4));
        assert_eq!((hp.a_nu, hp.b_nu), (1.0, 1.0));
        let full = RunConfig::for_profile(Profile::Full);
        assert_eq!((full.n_iter, full.n_burn, full.sim.subjects()), (20_000, 10_000, 100));
    }

    #[test]
    fn canonical_pairs_round_trip() {
        let cfg = RunConfig::from_pairs(&pairs(&[("seed", "42"), ("sim_skew", "-1.5;1"), ("g", "2"), ("neighborhood", "4")])).unwrap();
        let back = RunConfig::from_pairs(&cfg.to_pairs()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.to_pairs().len(), CONFIG_KEYS.len());
    }

    #[test]
    fn profile_applies_before_other_keys() {
        let cfg = RunConfig::from_pairs(&pairs(&[("n_iter", "300"), ("n_burn", "100"), ("profile", "full")])).unwrap();
        assert_eq!(cfg.profile, Profile::Full);
        assert_eq!(cfg.n_iter, 300);
        assert_eq!(cfg.sim.subjects_per_class, 20);
    }

    #[test]
    fn hash_tracks_every_key() {
        let base = RunConfig::default();
        let mut other = base.clone();
        other.seed += 1;
        assert_ne!(base.hash(), other.hash());
        assert_eq!(base.hash().len(), 16);
    }

    #[test]
    fn bad_keys_and_values_are_usage_errors() {
        for bad in [("nope", "1"), ("n_iter", "x"), ("intercept", "maybe"), ("sim_skew", "1"), ("g_max", "-2")] {
            let err = RunConfig::from_pairs(&pairs(&[bad])).unwrap_err();
            assert_eq!(err.kind(), crate::ErrorKind::Usage, "{bad:?}");
        }
        assert!(RunConfig::from_pairs(&pairs(&[("n_iter", "10"), ("n_burn", "10")])).is_err());
    }
}
