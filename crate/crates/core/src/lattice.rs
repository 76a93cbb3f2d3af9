//! Lattice coordinates of co-occurrence cells and their rook-adjacency graph.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::glcm::CountMatrix;

/// Which cells of a `K x K` matrix become lattice sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LatticeMode {
    /// Cells with `l >= h`, row-major; `K(K+1)/2` sites.
    UniqueTriangle,
    /// All `K^2` cells, row-major.
    FullGrid,
}

impl LatticeMode {
    pub fn site_count(self, k: usize) -> usize {
        match self {
            LatticeMode::UniqueTriangle => k * (k + 1) / 2,
            LatticeMode::FullGrid => k * k,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LatticeMode::UniqueTriangle => "unique_triangle",
            LatticeMode::FullGrid => "full_grid",
        }
    }
}

impl std::str::FromStr for LatticeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unique_triangle" | "triangle" => Ok(LatticeMode::UniqueTriangle),
            "full_grid" | "grid" => Ok(LatticeMode::FullGrid),
            other => Err(invalid(format!("unknown lattice mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for LatticeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Neighbor structure of a co-occurrence lattice.
///
/// Two sites are adjacent when their matrix coordinates differ by one in
/// exactly one index. `W` is kept as adjacency lists; dense forms are built
/// on request.
#[derive(Debug)]
pub struct LatticeGraph {
    k: usize,
    mode: LatticeMode,
    sites: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    spectrum: OnceLock<Vec<f64>>,
}

impl Clone for LatticeGraph {
    fn clone(&self) -> Self {
        let spectrum = OnceLock::new();
        if let Some(s) = self.spectrum.get() {
            let _ = spectrum.set(s.clone());
        }
        Self {
            k: self.k,
            mode: self.mode,
            sites: self.sites.clone(),
            neighbors: self.neighbors.clone(),
            spectrum,
        }
    }
}

impl PartialEq for LatticeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.mode == other.mode
    }
}

fn sites_for(k: usize, mode: LatticeMode) -> Vec<(usize, usize)> {
    match mode {
        LatticeMode::UniqueTriangle => (0..k).flat_map(|l| (0..=l).map(move |h| (l, h))).collect(),
        LatticeMode::FullGrid => (0..k).flat_map(|l| (0..k).map(move |h| (l, h))).collect(),
    }
}

/// Builds the rook-adjacency graph over the sites of the chosen mode.
pub fn lattice_graph(k: usize, mode: LatticeMode) -> Result<LatticeGraph> {
    if k < 2 {
        return Err(invalid(format!("lattice needs K >= 2, got {k}")));
    }
    let sites = sites_for(k, mode);
    let index_of = |l: usize, h: usize| -> Option<usize> {
        match mode {
            LatticeMode::FullGrid => Some(l * k + h),
            LatticeMode::UniqueTriangle if h <= l => Some(l * (l + 1) / 2 + h),
            LatticeMode::UniqueTriangle => None,
        }
    };
    let neighbors = sites
        .iter()
        .map(|&(l, h)| {
            let mut adj = Vec::with_capacity(4);
            if l > 0 {
                adj.extend(index_of(l - 1, h));
            }
            if h > 0 {
                adj.extend(index_of(l, h - 1));
            }
            if h + 1 < k {
                adj.extend(index_of(l, h + 1));
            }
            if l + 1 < k {
                adj.extend(index_of(l + 1, h));
            }
            adj.sort_unstable();
            adj
        })
        .collect();
    Ok(LatticeGraph {
        k,
        mode,
        sites,
        neighbors,
        spectrum: OnceLock::new(),
    })
}

impl LatticeGraph {
    pub fn levels(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> LatticeMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[(usize, usize)] {
        &self.sites
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Neighbor counts, the diagonal of `D`.
    pub fn degrees(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.neighbors.iter().map(|a| a.len() as f64))
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut w = DMatrix::zeros(n, n);
        for (i, adj) in self.neighbors.iter().enumerate() {
            for &j in adj {
                w[(i, j)] = 1.0;
            }
        }
        w
    }

    /// Dense `D - rho W`.
    pub fn car_matrix(&self, rho: f64) -> DMatrix<f64> {
        let mut q = self.adjacency() * -rho;
        for (i, adj) in self.neighbors.iter().enumerate() {
            q[(i, i)] = adj.len() as f64;
        }
        q
    }

    /// `x' W x` without forming `W`.
    pub fn adjacency_form(&self, x: &[f64]) -> f64 {
        self.neighbors
            .iter()
            .enumerate()
            .map(|(i, adj)| x[i] * adj.iter().map(|&j| x[j]).sum::<f64>())
            .sum()
    }

    /// `x' D x`.
    pub fn degree_form(&self, x: &[f64]) -> f64 {
        self.neighbors
            .iter()
            .zip(x)
            .map(|(adj, &v)| adj.len() as f64 * v * v)
            .sum()
    }

    /// `x' (D - rho W) x`.
    pub fn car_form(&self, x: &[f64], rho: f64) -> f64 {
        self.degree_form(x) - rho * self.adjacency_form(x)
    }

    /// Eigenvalues of `D^{-1/2} W D^{-1/2}`, ascending, computed once.
    pub fn normalized_spectrum(&self) -> &[f64] {
        self.spectrum.get_or_init(|| {
            let d = self.degrees();
            let mut m = self.adjacency();
            for i in 0..self.len() {
                for j in 0..self.len() {
                    if m[(i, j)] != 0.0 {
                        m[(i, j)] /= (d[i] * d[j]).sqrt();
                    }
                }
            }
            let mut values: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
            values.sort_by(f64::total_cmp);
            values
        })
    }

    /// `log |D - rho W|` through the cached spectrum.
    pub fn car_log_det(&self, rho: f64) -> f64 {
        let log_d: f64 = self.neighbors.iter().map(|a| (a.len() as f64).ln()).sum();
        log_d + self.normalized_spectrum().iter().map(|&l| (1.0 - rho * l).ln()).sum::<f64>()
    }
}

/// Flattens a count matrix onto lattice sites.
///
/// In triangle mode only cells with `l >= h` are read.
pub fn vectorize(m: &CountMatrix, mode: LatticeMode) -> Result<(Vec<u64>, LatticeGraph)> {
    let graph = lattice_graph(m.levels(), mode)?;
    let z = graph.sites().iter().map(|&(l, h)| m.get(l, h)).collect();
    Ok((z, graph))
}

/// Rebuilds the matrix from a lattice vector, mirroring the triangle.
pub fn devectorize(z: &[u64], k: usize, mode: LatticeMode) -> Result<CountMatrix> {
    if z.len() != mode.site_count(k) {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {mode} lattice with K = {k}",
            z.len()
        )));
    }
    let mut m = CountMatrix::zeros(k);
    for (&(l, h), &v) in sites_for(k, mode).iter().zip(z) {
        m.set(l, h, v);
        if mode == LatticeMode::UniqueTriangle {
            m.set(h, l, v);
        }
    }
    Ok(m)
}
