//! Gray-level binning and co-occurrence matrix construction.

use crate::error::{invalid, Error, Result};

/// A 2-D intensity image with an optional region-of-interest mask.
///
/// Pixels are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    rows: usize,
    cols: usize,
    pixels: Vec<f64>,
    mask: Option<Vec<bool>>,
}

impl GrayImage {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {rows}x{cols} image",
                pixels.len()
            )));
        }
        let image = Self {
            rows,
            cols,
            pixels,
            mask: None,
        };
        image.check_population()?;
        Ok(image)
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.pixels.len() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} cells, image has {}",
                mask.len(),
                self.pixels.len()
            )));
        }
        self.mask = Some(mask);
        self.check_population()?;
        Ok(self)
    }

    fn check_population(&self) -> Result<()> {
        if self.masked_in_count() < 2 {
            return Err(Error::NoCooccurrences);
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixel(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.cols + c]
    }

    pub fn is_masked_in(&self, r: usize, c: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[r * self.cols + c])
    }

    fn masked_in_count(&self) -> usize {
        match &self.mask {
            Some(m) => m.iter().filter(|&&b| b).count(),
            None => self.pixels.len(),
        }
    }

    /// Intensities of all pixels inside the region of interest.
    pub fn roi_values(&self) -> Vec<f64> {
        match &self.mask {
            Some(m) => self
                .pixels
                .iter()
                .zip(m)
                .filter(|(_, &inside)| inside)
                .map(|(&v, _)| v)
                .collect(),
            None => self.pixels.clone(),
        }
    }
}

/// Gray-level cut values. `edges` has `K + 1` entries with infinite outer
/// edges, so values beyond the clipping quantiles land in the outer bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSpec {
    edges: Vec<f64>,
    lo_q: f64,
    hi_q: f64,
}

impl BinSpec {
    /// Rebuilds a spec from its `K - 1` interior cut values.
    pub fn from_interior_edges(interior: &[f64], lo_q: f64, hi_q: f64) -> Result<Self> {
        if interior.is_empty() {
            return Err(invalid("need at least one interior edge"));
        }
        if interior.iter().any(|e| !e.is_finite()) || interior.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("interior edges must be finite and strictly increasing"));
        }
        let mut edges = Vec::with_capacity(interior.len() + 2);
        edges.push(f64::NEG_INFINITY);
        edges.extend_from_slice(interior);
        edges.push(f64::INFINITY);
        Ok(Self { edges, lo_q, hi_q })
    }

    pub fn levels(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn interior_edges(&self) -> &[f64] {
        &self.edges[1..self.edges.len() - 1]
    }

    pub fn clip_quantiles(&self) -> (f64, f64) {
        (self.lo_q, self.hi_q)
    }

    /// Zero-based gray level of an intensity: `edges[k] <= x < edges[k + 1]`.
    pub fn bin(&self, x: f64) -> usize {
        self.interior_edges().partition_point(|&e| e <= x)
    }
}

/// Linear-interpolation sample quantile of sorted data.
pub(crate) fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-probability gray-level bins inside the `[Q(lo_q), Q(hi_q)]` window.
pub fn quantile_bins(pixel_sample: &[f64], k: usize, lo_q: f64, hi_q: f64) -> Result<BinSpec> {
    if pixel_sample.is_empty() {
        return Err(invalid("empty intensity sample"));
    }
    if k < 2 {
        return Err(invalid(format!("need at least 2 gray levels, got {k}")));
    }
    if !(0.0..=1.0).contains(&lo_q) || !(0.0..=1.0).contains(&hi_q) || lo_q >= hi_q {
        return Err(invalid(format!(
            "clipping quantiles must satisfy 0 <= lo < hi <= 1, got ({lo_q}, {hi_q})"
        )));
    }
    if pixel_sample.iter().any(|v| !v.is_finite()) {
        return Err(invalid("intensity sample contains non-finite values"));
    }
    let mut sorted = pixel_sample.to_vec();
    sorted.sort_by(f64::total_cmp);

    let lo = sorted_quantile(&sorted, lo_q);
    let hi = sorted_quantile(&sorted, hi_q);
    if hi <= lo {
        return Err(Error::DegenerateRange);
    }
    let window: Vec<f64> = sorted
        .iter()
        .copied()
        .filter(|&v| v >= lo && v <= hi)
        .collect();

    let mut edges = Vec::with_capacity(k + 1);
    edges.push(f64::NEG_INFINITY);
    for i in 1..k {
        edges.push(sorted_quantile(&window, i as f64 / k as f64));
    }
    edges.push(f64::INFINITY);
    if edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DegenerateRange);
    }
    Ok(BinSpec { edges, lo_q, hi_q })
}

/// Which pixel offsets contribute to the co-occurrence count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Neighborhood {
    /// Horizontal and vertical offsets, both orientations.
    Four,
    /// Horizontal, vertical and both diagonals, both orientations.
    #[default]
    Eight,
}

impl Neighborhood {
    pub fn directions(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(0, 1), (0, -1), (1, 0), (-1, 0)];
        const EIGHT: [(isize, isize); 8] = [
            (0, 1),
            (0, -1),
            (1, 0),
            (-1, 0),
            (1, 1),
            (-1, -1),
            (1, -1),
            (-1, 1),
        ];
        match self {
            Neighborhood::Four => &FOUR,
            Neighborhood::Eight => &EIGHT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlcmOptions {
    pub offset: usize,
    pub neighborhood: Neighborhood,
}

impl Default for GlcmOptions {
    fn default() -> Self {
        Self {
            offset: 1,
            neighborhood: Neighborhood::Eight,
        }
    }
}

/// A square matrix of nonnegative integer counts, row-major.
///
/// Co-occurrence matrices built from images are symmetric; simulated
/// matrices need not be.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    k: usize,
    counts: Vec<u64>,
}

/// Co-occurrence matrices share the count-matrix representation.
pub type Glcm = CountMatrix;

impl CountMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != k * k {
            return Err(Error::DimensionMismatch(format!(
                "{} counts for a {k}x{k} matrix",
                counts.len()
            )));
        }
        Ok(Self { k, counts })
    }

    pub fn levels(&self) -> usize {
        self.k
    }

    pub fn get(&self, l: usize, h: usize) -> u64 {
        self.counts[l * self.k + h]
    }

    pub fn set(&mut self, l: usize, h: usize, v: u64) {
        self.counts[l * self.k + h] = v;
    }

    pub(crate) fn increment(&mut self, l: usize, h: usize) {
        self.counts[l * self.k + h] += 1;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.k).all(|l| (0..l).all(|h| self.get(l, h) == self.get(h, l)))
    }

    pub fn row(&self, l: usize) -> &[u64] {
        &self.counts[l * self.k..(l + 1) * self.k]
    }
}

/// Counts co-occurring gray levels over every ordered pair of in-ROI pixels
/// separated by `opts.offset` along each direction of the neighborhood.
pub fn build_glcm(image: &GrayImage, bins: &BinSpec, opts: GlcmOptions) -> Result<Glcm> {
    if opts.offset == 0 {
        return Err(invalid("offset must be at least 1"));
    }
    let k = bins.levels();
    let (rows, cols) = (image.rows() as isize, image.cols() as isize);
    let levels: Vec<usize> = image.pixels.iter().map(|&v| bins.bin(v)).collect();
    let step = opts.offset as isize;

    let mut glcm = CountMatrix::zeros(k);
    for r in 0..rows {
        for c in 0..cols {
            if !image.is_masked_in(r as usize, c as usize) {
                continue;
            }
            let from = levels[(r * cols + c) as usize];
            for &(dr, dc) in opts.neighborhood.directions() {
                let (rr, cc) = (r + dr * step, c + dc * step);
                if rr < 0 || cc < 0 || rr >= rows || cc >= cols {
                    continue;
                }
                if !image.is_masked_in(rr as usize, cc as usize) {
                    continue;
                }
                glcm.increment(from, levels[(rr * cols + cc) as usize]);
            }
        }
    }
    if glcm.total() == 0 {
        return Err(Error::NoCooccurrences);
    }
    Ok(glcm)
}
