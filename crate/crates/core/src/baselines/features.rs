use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::glcm::CountMatrix;

/// Five Haralick texture summaries of a co-occurrence matrix. Correlation
/// is NaN when either marginal has zero variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub contrast: f64,
    pub correlation: f64,
    pub homogeneity: f64,
    pub energy: f64,
    pub entropy: f64,
}

pub const FEATURE_NAMES: [&str; 5] = ["contrast", "correlation", "homogeneity", "energy", "entropy"];

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 5] {
        [self.contrast, self.correlation, self.homogeneity, self.energy, self.entropy]
    }

    pub fn correlation_defined(&self) -> bool {
        !self.correlation.is_nan()
    }
}

/// Features on gray levels numbered `1..=K`.
pub fn haralick_features(glcm: &CountMatrix) -> Result<FeatureVector> {
    let total = glcm.total();
    if total == 0 {
        return Err(Error::NoCooccurrences);
    }
    let k = glcm.levels();
    let n = total as f64;
    let p = |l: usize, h: usize| glcm.get(l, h) as f64 / n;
    let level = |i: usize| (i + 1) as f64;

    let (mut mu_l, mut mu_h) = (0.0, 0.0);
    for l in 0..k {
        for h in 0..k {
            mu_l += level(l) * p(l, h);
            mu_h += level(h) * p(l, h);
        }
    }
    let (mut var_l, mut var_h, mut cov) = (0.0, 0.0, 0.0);
    let (mut contrast, mut homogeneity, mut energy, mut entropy) = (0.0, 0.0, 0.0, 0.0);
    for l in 0..k {
        for h in 0..k {
            let pij = p(l, h);
            if pij == 0.0 {
                continue;
            }
            let (dl, dh) = (level(l) - mu_l, level(h) - mu_h);
            var_l += dl * dl * pij;
            var_h += dh * dh * pij;
            cov += dl * dh * pij;
            let gap = level(l) - level(h);
            contrast += gap * gap * pij;
            homogeneity += pij / (1.0 + gap.abs());
            energy += pij * pij;
            entropy -= pij * pij.ln();
        }
    }
    let correlation = if var_l > 0.0 && var_h > 0.0 {
        (cov / (var_l * var_h).sqrt()).clamp(-1.0, 1.0)
    } else {
        f64::NAN
    };
    Ok(FeatureVector {
        contrast,
        correlation,
        homogeneity,
        energy,
        entropy: entropy.max(0.0),
    })
}

/// Subjects-by-features design matrix with undefined correlations replaced
/// by the cohort median of the defined ones (0 if none is defined). With
/// `standardize`, each column is centred and scaled to unit variance;
/// constant columns are only centred.
pub fn feature_matrix(features: &[FeatureVector], standardize: bool) -> Result<DMatrix<f64>> {
    if features.is_empty() {
        return Err(crate::error::invalid("no feature vectors"));
    }
    let mut defined: Vec<f64> = features.iter().map(|f| f.correlation).filter(|c| !c.is_nan()).collect();
    let fill = if defined.is_empty() {
        0.0
    } else {
        defined.sort_by(f64::total_cmp);
        crate::glcm::sorted_quantile(&defined, 0.5)
    };
    let mut x = DMatrix::from_fn(features.len(), 5, |t, j| {
        let v = features[t].as_array()[j];
        if v.is_nan() {
            fill
        } else {
            v
        }
    });
    if standardize {
        let n = x.nrows() as f64;
        for mut col in x.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
            let sd = (col.norm_squared() / n).sqrt();
            if sd > 0.0 {
                col /= sd;
            }
        }
    }
    Ok(x)
}
