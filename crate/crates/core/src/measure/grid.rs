use super::{DiscreteMeasure, PointSet, MIN_CELL_MASS};
use crate::{Error, Result};

/// Axis-aligned box split into `resolution[a]` equal cells along each axis.
///
/// Cells are enumerated in row-major order with axis 0 varying fastest, so in
/// 2D the flat index is `row * cols + col` with `col` along x.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let d = lower.len();
        if d == 0 || d > 3 {
            return Err(Error::InvalidInput(format!("grid dimension {d} not in 1..=3")));
        }
        if upper.len() != d || resolution.len() != d {
            return Err(Error::InvalidInput("grid corner/resolution lengths differ".into()));
        }
        for a in 0..d {
            if !(lower[a].is_finite() && upper[a].is_finite() && upper[a] > lower[a]) {
                return Err(Error::InvalidInput(format!("grid axis {a} has empty extent")));
            }
            if resolution[a] == 0 {
                return Err(Error::InvalidInput(format!("grid axis {a} has zero cells")));
            }
        }
        Ok(Self { lower, upper, resolution })
    }

    /// Square/cubic grid with `n` cells per axis.
    pub fn uniform(lower: &[f64], upper: &[f64], n: usize) -> Result<Self> {
        Self::new(lower.to_vec(), upper.to_vec(), vec![n; lower.len()])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn cell_size(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.resolution[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.cell_size(a)).product()
    }

    /// Euclidean diameter of one cell.
    pub fn cell_diameter(&self) -> f64 {
        (0..self.dim()).map(|a| self.cell_size(a).powi(2)).sum::<f64>().sqrt()
    }

    pub fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.dim());
        for &n in &self.resolution {
            idx.push(k % n);
            k /= n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut k = 0;
        for a in (0..self.dim()).rev() {
            k = k * self.resolution[a] + idx[a];
        }
        k
    }

    pub fn center_into(&self, k: usize, out: &mut [f64]) {
        let mut rem = k;
        for a in 0..self.dim() {
            let n = self.resolution[a];
            let i = rem % n;
            rem /= n;
            out[a] = self.lower[a] + (i as f64 + 0.5) * self.cell_size(a);
        }
    }

    pub fn center(&self, k: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.dim()];
        self.center_into(k, &mut c);
        c
    }

    pub fn centers(&self) -> PointSet {
        let d = self.dim();
        let mut coords = vec![0.0; d * self.len()];
        for (k, c) in coords.chunks_exact_mut(d).enumerate() {
            self.center_into(k, c);
        }
        PointSet::new(d, coords).expect("grid centers are finite")
    }

    /// Per-axis cell index containing `x`, if inside the (closed) box.
    pub fn axis_index(&self, axis: usize, x: f64) -> Option<usize> {
        let lo = self.lower[axis];
        let hi = self.upper[axis];
        let slack = 1e-12 * (hi - lo);
        if x < lo - slack || x > hi + slack {
            return None;
        }
        let n = self.resolution[axis];
        let i = ((x - lo) / self.cell_size(axis)).floor();
        Some((i.max(0.0) as usize).min(n - 1))
    }

    pub fn cell_of(&self, p: &[f64]) -> Option<usize> {
        let mut k = 0;
        for a in (0..self.dim()).rev() {
            k = k * self.resolution[a] + self.axis_index(a, p[a])?;
        }
        Some(k)
    }

    /// Same box with every axis split `factor` times finer.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidInput("refinement factor must be positive".into()));
        }
        Self::new(
            self.lower.clone(),
            self.upper.clone(),
            self.resolution.iter().map(|n| n * factor).collect(),
        )
    }

    /// Flat indices of the cells whose per-axis indices are within `radius`
    /// of those of cell `k` (a (2r+1)^d block clipped to the grid).
    pub fn neighborhood(&self, k: usize, radius: usize) -> Vec<usize> {
        let center = self.multi_index(k);
        let ranges: Vec<(usize, usize)> = (0..self.dim())
            .map(|a| {
                let lo = center[a].saturating_sub(radius);
                let hi = (center[a] + radius).min(self.resolution[a] - 1);
                (lo, hi)
            })
            .collect();
        let mut out = Vec::new();
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            out.push(self.flat_index(&idx));
            let mut a = 0;
            loop {
                if a == idx.len() {
                    return out;
                }
                if idx[a] < ranges[a].1 {
                    idx[a] += 1;
                    break;
                }
                idx[a] = ranges[a].0;
                a += 1;
            }
        }
    }
}

/// A subset of the cells of a grid, stored as sorted flat indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SubGrid {
    grid: Grid,
    cells: Vec<usize>,
}

impl SubGrid {
    pub fn new(grid: Grid, mut cells: Vec<usize>) -> Result<Self> {
        cells.sort_unstable();
        cells.dedup();
        if let Some(&last) = cells.last() {
            if last >= grid.len() {
                return Err(Error::InvalidInput(format!("cell {last} outside grid")));
            }
        }
        Ok(Self { grid, cells })
    }

    pub fn full(grid: Grid) -> Self {
        let cells = (0..grid.len()).collect();
        Self { grid, cells }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.cells.binary_search(&cell).is_ok()
    }

    /// Position of `cell` in [`cells`](Self::cells).
    pub fn position(&self, cell: usize) -> Option<usize> {
        self.cells.binary_search(&cell).ok()
    }

    pub fn points(&self) -> PointSet {
        let d = self.grid.dim();
        let mut coords = vec![0.0; d * self.cells.len()];
        for (c, &k) in coords.chunks_exact_mut(d).zip(&self.cells) {
            self.grid.center_into(k, c);
        }
        PointSet::new(d, coords).expect("grid centers are finite")
    }
}

/// Sources accepted by [`quantize`].
pub enum Density<'a> {
    /// Pointwise density, integrated by the midpoint rule on each cell.
    Function(&'a dyn Fn(&[f64]) -> f64),
    /// Nonnegative value per cell in grid order (e.g. a grayscale image).
    Cells(&'a [f64]),
    /// Atoms binned into the cells containing them.
    Points(&'a DiscreteMeasure),
}

/// Quantizes a density onto a grid: one atom per nonempty cell at its center.
///
/// For point input every atom moves inside its own cell, so the 1-Wasserstein
/// distance to the input is at most the cell diameter.
pub fn quantize(density: Density<'_>, grid: &Grid) -> Result<DiscreteMeasure> {
    let mut mass = vec![0.0; grid.len()];
    match density {
        Density::Function(f) => {
            let vol = grid.cell_volume();
            let mut c = vec![0.0; grid.dim()];
            for (k, m) in mass.iter_mut().enumerate() {
                grid.center_into(k, &mut c);
                let v = f(&c);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidInput(format!("density value {v} at {c:?}")));
                }
                *m = v * vol;
            }
        }
        Density::Cells(values) => {
            if values.len() != grid.len() {
                return Err(Error::InvalidInput(format!(
                    "{} cell values for a grid of {} cells",
                    values.len(),
                    grid.len()
                )));
            }
            for (m, &v) in mass.iter_mut().zip(values) {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidInput(format!("cell value {v}")));
                }
                *m = v;
            }
        }
        Density::Points(measure) => {
            if measure.dim() != grid.dim() {
                return Err(Error::DimensionMismatch { expected: grid.dim(), got: measure.dim() });
            }
            for (p, &w) in measure.points().iter().zip(measure.weights()) {
                let k = grid.cell_of(p).ok_or_else(|| Error::OutsideGrid { point: p.to_vec() })?;
                mass[k] += w;
            }
        }
    }
    let cells: Vec<usize> = (0..grid.len()).filter(|&k| mass[k] > MIN_CELL_MASS).collect();
    if cells.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let sub = SubGrid::new(grid.clone(), cells)?;
    let weights = sub.cells().iter().map(|&k| mass[k]).collect();
    DiscreteMeasure::new(sub.points(), weights)?.normalize()
}
