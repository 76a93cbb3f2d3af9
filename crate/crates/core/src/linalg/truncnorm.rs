use statrs::function::erf::{erfc, erfc_inv};

/// Interval probability below which inverse-CDF sampling is abandoned in
/// favor of the boundary nearest the mean.
pub const TAIL_MASS_FLOOR: f64 = 1e-300;

/// Standard normal CDF, accurate far into the lower tail.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
#[inline]
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Inverse-CDF draw from `N(mu, sigma2)` truncated to `[lo, hi)`.
///
/// Intervals lying entirely above the mean are reflected so the CDF is
/// always evaluated in the lower tail, where `erfc` keeps full relative
/// precision. The result is clamped into `[lo, hi)`.
pub fn truncnorm_inverse_cdf(mu: f64, sigma2: f64, lo: f64, hi: f64, u: f64) -> f64 {
    debug_assert!(lo < hi && sigma2 > 0.0);
    let sd = sigma2.sqrt();
    let a = (lo - mu) / sd;
    let b = (hi - mu) / sd;

    let standard = if a > 0.0 {
        lower_tail_draw(-b, -a, 1.0 - u).map(|x| -x)
    } else {
        lower_tail_draw(a, b, u)
    };
    let x = match standard {
        Some(x) => mu + sd * x,
        None => {
            log::debug!("truncated normal mass below floor on [{lo}, {hi}) for mean {mu}");
            if mu >= hi {
                hi
            } else {
                lo
            }
        }
    };
    clamp_half_open(x, lo, hi)
}

fn lower_tail_draw(a: f64, b: f64, u: f64) -> Option<f64> {
    let pa = normal_cdf(a);
    let pb = normal_cdf(b);
    let mass = pb - pa;
    if !(mass >= TAIL_MASS_FLOOR) {
        return None;
    }
    let x = normal_quantile(pa + u * mass);
    x.is_finite().then_some(x)
}

#[inline]
fn clamp_half_open(x: f64, lo: f64, hi: f64) -> f64 {
    if x >= hi {
        let below = hi.next_down();
        if below >= lo {
            below
        } else {
            lo
        }
    } else if x < lo {
        lo
    } else {
        x
    }
}
