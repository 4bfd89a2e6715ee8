//! Exact nearest-neighbor search with an implicit median kd-tree.
//!
//! The tree is stored as a permutation of the input: the node for a range
//! `[lo, hi)` is the point at `(lo + hi) / 2`, split on axis `depth % dim`.

use std::cmp::Ordering;

use crate::measure::{dist2, PointSet};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct KdTree {
    dim: usize,
    /// Points in tree order.
    coords: Vec<f64>,
    /// Original index of each point in tree order.
    index: Vec<usize>,
}

/// Counters collected by [`KdTree::nearest_with_stats`].
#[derive(Clone, Copy, Debug, Default)]
pub struct SearchStats {
    pub visited: usize,
}

impl KdTree {
    pub fn build(points: &PointSet) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        let dim = points.dim();
        let mut order: Vec<usize> = (0..points.len()).collect();
        split(points, &mut order, 0);
        let mut coords = Vec::with_capacity(points.coords().len());
        for &i in &order {
            coords.extend_from_slice(points.point(i));
        }
        Ok(Self { dim, coords, index: order })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Height of the tree; a single point has depth 0.
    pub fn depth(&self) -> usize {
        fn go(n: usize) -> usize {
            if n <= 1 {
                0
            } else {
                let mid = n / 2;
                1 + go(mid).max(go(n - mid - 1))
            }
        }
        go(self.len())
    }

    #[inline]
    fn point(&self, slot: usize) -> &[f64] {
        &self.coords[slot * self.dim..(slot + 1) * self.dim]
    }

    /// Index and squared distance of the closest stored point. Ties go to the
    /// smallest original index.
    pub fn nearest(&self, query: &[f64]) -> (usize, f64) {
        let mut stats = SearchStats::default();
        self.nearest_with_stats(query, &mut stats)
    }

    pub fn nearest_with_stats(&self, query: &[f64], stats: &mut SearchStats) -> (usize, f64) {
        debug_assert_eq!(query.len(), self.dim);
        let mut best = (usize::MAX, f64::INFINITY);
        let mut off = vec![0.0; self.dim];
        self.search(query, 0, self.len(), 0, 0.0, &mut off, &mut best, stats);
        best
    }

    /// `rd` is the squared distance from `q` to the box of the current node,
    /// kept incrementally through the per-axis offsets `off`.
    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        q: &[f64],
        lo: usize,
        hi: usize,
        depth: usize,
        rd: f64,
        off: &mut [f64],
        best: &mut (usize, f64),
        stats: &mut SearchStats,
    ) {
        if lo >= hi {
            return;
        }
        stats.visited += 1;
        let mid = (lo + hi) / 2;
        let p = self.point(mid);
        let d = dist2(q, p);
        let k = self.index[mid];
        if d < best.1 || (d == best.1 && k < best.0) {
            *best = (k, d);
        }
        if hi - lo == 1 {
            return;
        }
        let axis = depth % self.dim;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(q, near.0, near.1, depth + 1, rd, off, best, stats);
        let old = off[axis];
        let far_rd = rd - old * old + diff * diff;
        // the margin absorbs rounding in the running sum; equality must stay
        // reachable so that smaller indices win ties
        if far_rd <= best.1 * (1.0 + 1e-12) + f64::MIN_POSITIVE {
            off[axis] = diff;
            self.search(q, far.0, far.1, depth + 1, far_rd, off, best, stats);
            off[axis] = old;
        }
    }

    /// Original indices of every point within squared distance `r2`, sorted.
    pub fn within(&self, query: &[f64], r2: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.ball(query, r2, 0, self.len(), 0, &mut out);
        out.sort_unstable();
        out
    }

    fn ball(&self, q: &[f64], r2: f64, lo: usize, hi: usize, depth: usize, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let p = self.point(mid);
        if dist2(q, p) <= r2 {
            out.push(self.index[mid]);
        }
        let axis = depth % self.dim;
        let diff = q[axis] - p[axis];
        if diff <= 0.0 || diff * diff <= r2 {
            self.ball(q, r2, lo, mid, depth + 1, out);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.ball(q, r2, mid + 1, hi, depth + 1, out);
        }
    }
}

fn split(points: &PointSet, order: &mut [usize], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % points.dim();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points.point(a)[axis].partial_cmp(&points.point(b)[axis]).unwrap_or(Ordering::Equal)
    });
    let (left, rest) = order.split_at_mut(mid);
    split(points, left, depth + 1);
    split(points, &mut rest[1..], depth + 1);
}

/// Nearest-neighbor index over the lifted grid points
/// `Q^k = (√a·z_k, √(c − φ^k))` with `c = max_k φ^k`, so that
/// `min_k a|y − z_k|² − φ^k = min_k |P − Q^k|² − c` for `P = (√a·y, 0)`.
#[derive(Clone, Debug)]
pub struct LiftedIndex {
    tree: KdTree,
    scale: f64,
    offset: f64,
}

impl LiftedIndex {
    /// `a` is the quadratic coefficient of the cost `a|y − z|²`.
    pub fn new(z: &PointSet, a: f64, phi: &[f64]) -> Result<Self> {
        if phi.len() != z.len() {
            return Err(Error::InvalidInput(format!("{} potentials for {} points", phi.len(), z.len())));
        }
        if !(a > 0.0) {
            return Err(Error::InvalidInput("quadratic coefficient must be positive".into()));
        }
        let d = z.dim();
        let scale = a.sqrt();
        let offset = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut coords = Vec::with_capacity((d + 1) * z.len());
        for (p, &f) in z.iter().zip(phi) {
            coords.extend(p.iter().map(|c| scale * c));
            coords.push((offset - f).max(0.0).sqrt());
        }
        Ok(Self { tree: KdTree::build(&PointSet::new(d + 1, coords)?)?, scale, offset })
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Nearest lifted point to `P(y)`, returned as the grid index.
    pub fn argmin(&self, y: &[f64], lifted: &mut Vec<f64>, stats: &mut SearchStats) -> usize {
        lifted.clear();
        lifted.extend(y.iter().map(|c| self.scale * c));
        lifted.push(0.0);
        self.tree.nearest_with_stats(lifted, stats).0
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_root() {
        let t = KdTree::build(&PointSet::from_points(&[[1.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(t.depth(), 0);
        assert_eq!(t.nearest(&[5.0, 5.0]), (0, 25.0));
    }

    #[test]
    fn cube_has_depth_three() {
        let mut v = Vec::new();
        for i in 0..8 {
            v.push([(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]);
        }
        let t = KdTree::build(&PointSet::from_points(&v).unwrap()).unwrap();
        assert_eq!(t.depth(), 3);
        for (k, p) in v.iter().enumerate() {
            assert_eq!(t.nearest(p), (k, 0.0));
        }
    }

    #[test]
    fn equidistant_points_resolve_to_smaller_index() {
        let pts = PointSet::from_points(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
        let t = KdTree::build(&pts).unwrap();
        assert_eq!(t.nearest(&[0.0, 0.0]), (0, 1.0));
        assert_eq!(t.nearest(&[-0.5, -0.5]).0, 1);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(KdTree::build(&PointSet::empty(2)).is_err());
    }

    #[test]
    fn lifted_argmin_matches_formula() {
        let z = PointSet::from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let phi = [0.0, 0.3, -0.2];
        let a = 0.25;
        let idx = LiftedIndex::new(&z, a, &phi).unwrap();
        let y = [0.6, 0.1];
        let naive = (0..3)
            .min_by(|&i, &j| {
                let f = |k: usize| a * dist2(&y, z.point(k)) - phi[k];
                f(i).partial_cmp(&f(j)).unwrap()
            })
            .unwrap();
        let mut buf = Vec::new();
        assert_eq!(idx.argmin(&y, &mut buf, &mut SearchStats::default()), naive);
        assert_eq!(idx.offset(), 0.3);
    }
}
