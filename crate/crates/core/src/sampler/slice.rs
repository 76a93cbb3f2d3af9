use rand::Rng;

/// Univariate slice sampler with stepping-out and shrinkage.
#[derive(Debug, Clone, Copy)]
pub struct SliceSampler {
    pub width: f64,
    pub max_step_out: usize,
    pub max_shrink: usize,
}

impl Default for SliceSampler {
    fn default() -> Self {
        Self {
            width: 0.25,
            max_step_out: 32,
            max_shrink: 100,
        }
    }
}

impl SliceSampler {
    /// One transition from `x0` targeting `exp(log_f)`. Returns `None` when
    /// the bracket collapses without an accepted point.
    pub fn step<R, F>(&self, x0: f64, log_f: F, rng: &mut R) -> Option<f64>
    where
        R: Rng + ?Sized,
        F: Fn(f64) -> f64,
    {
        let level = log_f(x0) + rng.random::<f64>().ln();
        if !level.is_finite() {
            return None;
        }
        let mut lo = x0 - self.width * rng.random::<f64>();
        let mut hi = lo + self.width;
        let mut budget = self.max_step_out;
        while budget > 0 && log_f(lo) > level {
            lo -= self.width;
            budget -= 1;
        }
        budget = self.max_step_out;
        while budget > 0 && log_f(hi) > level {
            hi += self.width;
            budget -= 1;
        }
        for _ in 0..self.max_shrink {
            let x = lo + (hi - lo) * rng.random::<f64>();
            if log_f(x) > level {
                return Some(x);
            }
            if x < x0 {
                lo = x;
            } else {
                hi = x;
            }
        }
        None
    }
}
