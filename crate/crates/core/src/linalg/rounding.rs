use crate::error::{invalid, Result};

/// Latent interval that rounds to count `z`: `(-inf, 0)` for zero,
/// `[z - 1, z)` otherwise.
pub fn count_interval(z: i64) -> Result<(f64, f64)> {
    match z {
        z if z < 0 => Err(invalid(format!("negative count {z}"))),
        0 => Ok((f64::NEG_INFINITY, 0.0)),
        z => Ok(((z - 1) as f64, z as f64)),
    }
}

/// Interval for a count already known to be nonnegative.
#[inline]
pub(crate) fn interval_of(z: u64) -> (f64, f64) {
    if z == 0 {
        (f64::NEG_INFINITY, 0.0)
    } else {
        ((z - 1) as f64, z as f64)
    }
}

/// Maps a latent real back to its count.
#[inline]
pub fn round_latent(y: f64) -> u64 {
    if y < 0.0 {
        0
    } else {
        y.floor() as u64 + 1
    }
}
