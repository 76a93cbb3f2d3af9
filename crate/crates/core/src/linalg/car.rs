use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::lattice::LatticeGraph;

/// Factored CAR precision `Q = D - rho W`.
#[derive(Debug, Clone)]
pub struct CarPrecision {
    rho: f64,
    q: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
    spectrum: Vec<f64>,
}

pub fn car_precision(graph: &LatticeGraph, rho: f64) -> Result<CarPrecision> {
    if !(0.0..1.0).contains(&rho) {
        return Err(invalid(format!("CAR rho must lie in [0, 1), got {rho}")));
    }
    let q = graph.car_matrix(rho);
    let chol = q
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("D - rho W not positive definite at rho = {rho}")))?;
    Ok(CarPrecision {
        rho,
        q,
        chol,
        log_det: graph.car_log_det(rho),
        spectrum: graph.normalized_spectrum().to_vec(),
    })
}

impl CarPrecision {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// `log |Q|` from the eigenvalue identity.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `log |Q|` read off the Cholesky diagonal.
    pub fn cholesky_log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Eigenvalues of `D^{-1/2} W D^{-1/2}`.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }
}

/// Draws from `N(mean, (scale * Q)^{-1})`.
///
/// With `Q = L L'`, solving `L' v = e` for standard normal `e` gives
/// `cov(v) = Q^{-1}`.
pub fn sample_mvn_precision<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    precision_scale: f64,
    car: &CarPrecision,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !(precision_scale > 0.0) {
        return Err(invalid(format!("precision scale must be positive, got {precision_scale}")));
    }
    if mean.len() != car.dim() {
        return Err(Error::DimensionMismatch(format!(
            "mean of length {} for a {}-site precision",
            mean.len(),
            car.dim()
        )));
    }
    let e = DVector::from_fn(car.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let lt = car.chol.l_dirty().transpose();
    let v = lt
        .solve_upper_triangular(&e)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    Ok(mean + v / precision_scale.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{lattice_graph, LatticeMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rho_is_diagonal() {
        let g = lattice_graph(3, LatticeMode::UniqueTriangle).unwrap();
        let car = car_precision(&g, 0.0).unwrap();
        let d = g.degrees();
        assert_eq!(car.matrix(), &DMatrix::from_diagonal(&d));
        let expect: f64 = d.iter().map(|v| v.ln()).sum();
        assert!((car.log_det() - expect).abs() < 1e-12);
    }

    #[test]
    fn log_det_routes_agree() {
        let g = lattice_graph(3, LatticeMode::UniqueTriangle).unwrap();
        let car = car_precision(&g, 0.5).unwrap();
        assert!((car.log_det() - car.cholesky_log_det()).abs() < 1e-10);
    }

    #[test]
    fn near_one_stays_positive_definite() {
        let g = lattice_graph(5, LatticeMode::FullGrid).unwrap();
        let car = car_precision(&g, 0.999).unwrap();
        let min = car.matrix().symmetric_eigenvalues().min();
        assert!(min > 0.0 && min < 0.05);
    }

    #[test]
    fn rejects_improper_rho() {
        let g = lattice_graph(3, LatticeMode::FullGrid).unwrap();
        assert!(car_precision(&g, 1.0).is_err());
        assert!(car_precision(&g, -0.1).is_err());
    }

    #[test]
    fn mean_shift_equivariance() {
        let g = lattice_graph(3, LatticeMode::FullGrid).unwrap();
        let car = car_precision(&g, 0.4).unwrap();
        let zero = DVector::zeros(g.len());
        let shifted = DVector::from_element(g.len(), 2.5);
        let a = sample_mvn_precision(&zero, 2.0, &car, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_mvn_precision(&shifted, 2.0, &car, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for i in 0..g.len() {
            assert!((b[i] - a[i] - 2.5).abs() < 1e-12);
        }
    }
}
