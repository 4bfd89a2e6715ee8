//! Discrete measures, quantization grids, costs and two-marginal transport.

mod cost;
mod grid;
pub mod io;
mod ot;
mod plan;

pub use cost::{CostKind, CostSpec};
pub use grid::{quantize, Density, Grid, SubGrid};
pub use ot::{ot_cost, stability_bound, wasserstein1};
pub(crate) use ot::PLAN_EPS;
pub use plan::TransportPlan;

use std::collections::HashMap;

use crate::{Error, Result};

/// Masses below this are dropped before normalization.
pub const MIN_CELL_MASS: f64 = 1e-15;

/// A finite list of points in ℝ^d with flat row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidInput(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let dim = points.first().map(|p| p.as_ref().len()).ok_or(Error::EmptyMeasure)?;
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords)
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, coords: Vec::new() }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn push(&mut self, p: &[f64]) {
        debug_assert_eq!(p.len(), self.dim);
        self.coords.extend_from_slice(p);
    }

    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut out = PointSet::empty(self.dim);
        for &i in indices {
            out.push(self.point(i));
        }
        out
    }

    /// Per-axis lower and upper bounds.
    pub fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.is_empty() {
            return None;
        }
        let mut lo = self.point(0).to_vec();
        let mut hi = lo.clone();
        for p in self.iter() {
            for a in 0..self.dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Some((lo, hi))
    }
}

#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Neumaier summation; grids put tens of thousands of equal atoms in one sum.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for &v in values {
        let t = s + v;
        c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        s = t;
    }
    s + c
}

/// Weighted point cloud `Σ_j w_j δ_{x_j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    points: PointSet,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: PointSet, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        Ok(Self { points, weights })
    }

    /// Equal weights on every point, normalized.
    pub fn uniform(points: PointSet) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptyMeasure);
        }
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::new(PointSet::new(point.len(), point.to_vec())?, vec![1.0])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn point(&self, j: usize) -> &[f64] {
        self.points.point(j)
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(&self.weights)
    }

    /// Rescales the weights to sum to one. Fails on zero total mass.
    pub fn normalize(mut self) -> Result<Self> {
        let mass = self.total_mass();
        if !(mass > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        for w in &mut self.weights {
            *w /= mass;
        }
        Ok(self)
    }

    /// Merges atoms with identical coordinates, keeping first-appearance order.
    pub fn dedupe(self) -> Self {
        let dim = self.dim();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut points = PointSet::empty(dim);
        let mut weights = Vec::new();
        for (p, &w) in self.points.iter().zip(&self.weights) {
            // -0.0 and 0.0 are the same location
            let key: Vec<u64> = p.iter().map(|c| (c + 0.0).to_bits()).collect();
            match index.get(&key) {
                Some(&slot) => weights[slot] += w,
                None => {
                    index.insert(key, weights.len());
                    points.push(p);
                    weights.push(w);
                }
            }
        }
        Self { points, weights }
    }

    /// Drops atoms of mass at most `threshold`.
    pub fn prune(&self, threshold: f64) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&j| self.weights[j] > threshold).collect();
        Self {
            points: self.points.select(&keep),
            weights: keep.iter().map(|&j| self.weights[j]).collect(),
        }
    }

    /// Indices of atoms carrying mass above `threshold`.
    pub fn support(&self, threshold: f64) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.weights[j] > threshold).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mass = self.total_mass();
        let mut m = vec![0.0; self.dim()];
        for (p, &w) in self.points.iter().zip(&self.weights) {
            for a in 0..p.len() {
                m[a] += w * p[a];
            }
        }
        m.iter_mut().for_each(|c| *c /= mass);
        m
    }

    /// Image of the measure under `x ↦ x + shift`.
    pub fn translate(&self, shift: &[f64]) -> Self {
        let mut coords = self.points.coords().to_vec();
        for p in coords.chunks_exact_mut(self.dim()) {
            for (c, s) in p.iter_mut().zip(shift) {
                *c += s;
            }
        }
        Self { points: PointSet { dim: self.dim(), coords }, weights: self.weights.clone() }
    }
}
