use crate::error::{invalid, Result};

/// Floor on the standard error of the mean difference.
pub const GEWEKE_VARIANCE_FLOOR: f64 = 1e-12;
const BATCHES: usize = 20;

/// Geweke z-score comparing the first `frac_a` and last `frac_b` of a
/// series. Each segment's mean variance comes from non-overlapping batch
/// means (20 batches, fewer when the segment is shorter).
pub fn geweke_z(series: &[f64], frac_a: f64, frac_b: f64) -> Result<f64> {
    if series.len() < 100 {
        return Err(invalid(format!("Geweke needs at least 100 draws, got {}", series.len())));
    }
    if !(frac_a > 0.0 && frac_b > 0.0 && frac_a + frac_b <= 1.0) {
        return Err(invalid(format!("bad Geweke fractions ({frac_a}, {frac_b})")));
    }
    let n = series.len();
    let n_a = ((frac_a * n as f64).floor() as usize).max(2);
    let n_b = ((frac_b * n as f64).floor() as usize).max(2);
    let a = &series[..n_a];
    let b = &series[n - n_b..];
    let (mean_a, var_a) = batch_mean_variance(a);
    let (mean_b, var_b) = batch_mean_variance(b);
    let se = (var_a + var_b).sqrt().max(GEWEKE_VARIANCE_FLOOR);
    Ok((mean_a - mean_b) / se)
}

/// Segment mean and the batch-means estimate of its variance.
fn batch_mean_variance(x: &[f64]) -> (f64, f64) {
    let batches = BATCHES.min(x.len());
    let size = x.len() / batches;
    let used = &x[..size * batches];
    let means: Vec<f64> = used.chunks(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var_means = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (x.iter().sum::<f64>() / x.len() as f64, var_means / batches as f64)
}
