use nalgebra::DMatrix;

use super::Partition;
use crate::error::{invalid, Result};

/// One agglomeration: clusters `a` and `b` joined at `height` into a new
/// cluster of `size` members. Leaves are `0..T`; the cluster formed at step
/// `s` is numbered `T + s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    leaves: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn new(leaves: usize, merges: Vec<Merge>) -> Result<Self> {
        if merges.len() + 1 != leaves.max(1) {
            return Err(invalid(format!("{} merges for {leaves} leaves", merges.len())));
        }
        Ok(Self { leaves, merges })
    }

    pub fn leaves(&self) -> usize {
        self.leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Leaves in left-to-right plotting order.
    pub fn leaf_order(&self) -> Vec<usize> {
        if self.leaves == 0 {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(self.leaves);
        let mut stack = vec![self.leaves + self.merges.len() - 1];
        while let Some(node) = stack.pop() {
            if node < self.leaves {
                out.push(node);
            } else {
                let m = self.merges[node - self.leaves];
                stack.push(m.b);
                stack.push(m.a);
            }
        }
        out
    }

    /// Partition into `g` groups by undoing the last `g - 1` merges.
    pub fn cut(&self, g: usize) -> Result<Partition> {
        if g == 0 || g > self.leaves {
            return Err(invalid(format!("cannot cut {} leaves into {g} groups", self.leaves)));
        }
        let total = self.leaves + self.merges.len();
        let mut parent: Vec<usize> = (0..total).collect();
        for (s, m) in self.merges.iter().take(self.leaves - g).enumerate() {
            parent[m.a] = self.leaves + s;
            parent[m.b] = self.leaves + s;
        }
        let root = |mut x: usize| {
            while parent[x] != x {
                x = parent[x];
            }
            x
        };
        let roots: Vec<usize> = (0..self.leaves).map(root).collect();
        Ok(Partition::from_labels(&roots))
    }
}

/// Ward agglomeration on a squared-Euclidean dissimilarity matrix using the
/// Lance-Williams recurrence
/// `d(k, i+j) = [(n_i+n_k) d(k,i) + (n_j+n_k) d(k,j) - n_k d(i,j)] / (n_i+n_j+n_k)`.
///
/// Active clusters occupy slots `0..T`; a merge keeps the lower slot. Ties
/// go to the lexicographically smallest slot pair.
pub fn ward_cluster(d: &DMatrix<f64>) -> Result<Dendrogram> {
    let t = d.nrows();
    if d.ncols() != t {
        return Err(invalid("dissimilarity must be square"));
    }
    if t == 0 {
        return Err(invalid("no observations"));
    }
    let mut dist = d.clone();
    let mut size = vec![1usize; t];
    let mut node: Vec<usize> = (0..t).collect();
    let mut active = vec![true; t];
    let mut merges = Vec::with_capacity(t.saturating_sub(1));

    for step in 0..t.saturating_sub(1) {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in (0..t).filter(|&i| active[i]) {
            for j in ((i + 1)..t).filter(|&j| active[j]) {
                if dist[(i, j)] < best.2 {
                    best = (i, j, dist[(i, j)]);
                }
            }
        }
        let (i, j, height) = best;
        if i == usize::MAX {
            return Err(invalid("dissimilarity contains NaN"));
        }
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in (0..t).filter(|&k| active[k] && k != i && k != j) {
            let nk = size[k] as f64;
            let updated = ((ni + nk) * dist[(k, i)] + (nj + nk) * dist[(k, j)] - nk * height) / (ni + nj + nk);
            dist[(k, i)] = updated;
            dist[(i, k)] = updated;
        }
        merges.push(Merge {
            a: node[i].min(node[j]),
            b: node[i].max(node[j]),
            height,
            size: size[i] + size[j],
        });
        size[i] += size[j];
        node[i] = t + step;
        active[j] = false;
    }
    Dendrogram::new(t, merges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::dissimilarity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Recomputes every pairwise Ward cost from member coordinates at each
    /// step: `2 n_a n_b / (n_a + n_b) |c_a - c_b|^2`, which equals the
    /// recurrence seeded with squared distances.
    pub(crate) fn naive_ward(points: &DMatrix<f64>) -> Vec<Merge> {
        let t = points.nrows();
        let mut slots: Vec<Option<(Vec<usize>, usize)>> = (0..t).map(|i| Some((vec![i], i))).collect();
        let mut merges = Vec::new();
        for step in 0..t - 1 {
            let centroid = |m: &[usize]| {
                let mut c = vec![0.0; points.ncols()];
                for &r in m {
                    for (k, ck) in c.iter_mut().enumerate() {
                        *ck += points[(r, k)] / m.len() as f64;
                    }
                }
                c
            };
            let mut best = (0, 0, f64::INFINITY);
            for i in 0..t {
                for j in (i + 1)..t {
                    if let (Some((a, _)), Some((b, _))) = (&slots[i], &slots[j]) {
                        let (ca, cb) = (centroid(a), centroid(b));
                        let sq: f64 = ca.iter().zip(&cb).map(|(x, y)| (x - y) * (x - y)).sum();
                        let (na, nb) = (a.len() as f64, b.len() as f64);
                        let cost = 2.0 * na * nb / (na + nb) * sq;
                        if cost < best.2 {
                            best = (i, j, cost);
                        }
                    }
                }
            }
            let (i, j, h) = best;
            let (mj, idj) = slots[j].take().unwrap();
            let (mi, idi) = slots[i].as_mut().unwrap();
            merges.push(Merge {
                a: (*idi).min(idj),
                b: (*idi).max(idj),
                height: h,
                size: mi.len() + mj.len(),
            });
            mi.extend(mj);
            *idi = t + step;
        }
        merges
    }

    #[test]
    fn two_points_merge_at_their_distance() {
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 3.5, 3.5, 0.0]);
        let dend = ward_cluster(&d).unwrap();
        assert_eq!(dend.merges(), &[Merge { a: 0, b: 1, height: 3.5, size: 2 }]);
    }

    #[test]
    fn duplicate_point_merges_first_at_zero() {
        let pts = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 5.0, 1.0, 5.0, 1.0, -3.0, 2.0]);
        let dend = ward_cluster(&dissimilarity(&pts).unwrap()).unwrap();
        assert_eq!(dend.merges()[0].height, 0.0);
        assert_eq!((dend.merges()[0].a, dend.merges()[0].b), (1, 2));
    }

    #[test]
    fn matches_naive_recompute_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for t in 2..=8 {
            for _ in 0..25 {
                let pts = DMatrix::from_fn(t, 3, |_, _| rng.random_range(-4.0..4.0));
                let fast = ward_cluster(&dissimilarity(&pts).unwrap()).unwrap();
                let slow = naive_ward(&pts);
                for (a, b) in fast.merges().iter().zip(&slow) {
                    assert_eq!((a.a, a.b, a.size), (b.a, b.b, b.size));
                    assert!((a.height - b.height).abs() < 1e-9 * (1.0 + b.height));
                }
            }
        }
    }

    #[test]
    fn heights_non_decreasing_and_leaves_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = DMatrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
        let dend = ward_cluster(&dissimilarity(&pts).unwrap()).unwrap();
        for w in dend.merges().windows(2) {
            assert!(w[1].height >= w[0].height - 1e-12);
        }
        let mut order = dend.leaf_order();
        order.sort_unstable();
        assert_eq!(order, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn cuts_yield_requested_group_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = DMatrix::from_fn(12, 2, |_, _| rng.random_range(-1.0..1.0));
        let dend = ward_cluster(&dissimilarity(&pts).unwrap()).unwrap();
        for g in 1..=12 {
            assert_eq!(dend.cut(g).unwrap().groups(), g);
        }
        assert!(dend.cut(0).is_err());
        assert!(dend.cut(13).is_err());
    }
}
