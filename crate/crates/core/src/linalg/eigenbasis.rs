use nalgebra::DMatrix;

use crate::lattice::{LatticeGraph, LatticeMode};

/// Orthonormal eigenbasis of `Q = D - rho W` for one value of `rho`.
///
/// On the full grid the rook graph is a Cartesian product of two paths, so
/// `Q = Qp (x) I + I (x) Qp` with `Qp` the `K x K` path precision; the basis
/// is the Kronecker product of the path eigenvectors and transforms cost
/// `O(K^3)`. Other lattices use a dense `n x n` decomposition.
#[derive(Debug, Clone)]
pub struct CarEigenbasis {
    values: Vec<f64>,
    kind: BasisKind,
}

#[derive(Debug, Clone)]
enum BasisKind {
    Kronecker { k: usize, vectors: DMatrix<f64> },
    Dense { vectors: DMatrix<f64> },
}

impl CarEigenbasis {
    pub fn new(graph: &LatticeGraph, rho: f64) -> Self {
        match graph.mode() {
            LatticeMode::FullGrid => Self::kronecker(graph.levels(), rho),
            LatticeMode::UniqueTriangle => Self::dense(graph, rho),
        }
    }

    fn kronecker(k: usize, rho: f64) -> Self {
        let path = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                (usize::from(i > 0) + usize::from(i + 1 < k)) as f64
            } else if i.abs_diff(j) == 1 {
                -rho
            } else {
                0.0
            }
        });
        let eig = path.symmetric_eigen();
        let lam = eig.eigenvalues;
        let values = (0..k)
            .flat_map(|a| (0..k).map(move |b| (a, b)))
            .map(|(a, b)| lam[a] + lam[b])
            .collect();
        Self {
            values,
            kind: BasisKind::Kronecker {
                k,
                vectors: eig.eigenvectors,
            },
        }
    }

    fn dense(graph: &LatticeGraph, rho: f64) -> Self {
        Self::from_precision(graph.car_matrix(rho))
    }

    /// Dense basis of an arbitrary symmetric positive-definite precision.
    pub fn from_precision(q: DMatrix<f64>) -> Self {
        let eig = q.symmetric_eigen();
        Self {
            values: eig.eigenvalues.iter().copied().collect(),
            kind: BasisKind::Dense {
                vectors: eig.eigenvectors,
            },
        }
    }

    /// Eigenvalues of `Q`, in coefficient order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn log_det(&self) -> f64 {
        self.values.iter().map(|v| v.ln()).sum()
    }

    /// Coordinates `U' x`.
    pub fn to_coefficients(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            BasisKind::Kronecker { k, vectors } => {
                let m = DMatrix::from_row_slice(*k, *k, x);
                let c = vectors.transpose() * m * vectors;
                row_major(&c)
            }
            BasisKind::Dense { vectors } => vectors.tr_mul(&nalgebra::DVector::from_column_slice(x)).as_slice().to_vec(),
        }
    }

    /// Site values `U c`.
    pub fn from_coefficients(&self, c: &[f64]) -> Vec<f64> {
        match &self.kind {
            BasisKind::Kronecker { k, vectors } => {
                let m = DMatrix::from_row_slice(*k, *k, c);
                let x = vectors * m * vectors.transpose();
                row_major(&x)
            }
            BasisKind::Dense { vectors } => (vectors * nalgebra::DVector::from_column_slice(c)).as_slice().to_vec(),
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}
