//! Closed-form barycenters of Gaussian measures, used as a reference.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::measure::{DiscreteMeasure, Grid, PointSet};
use crate::{Error, Result};

pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const FIXED_POINT_ITERS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSpec {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub weight: f64,
}

impl GaussianSpec {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, weight: f64) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: cov.nrows() });
        }
        if (&cov - cov.transpose()).amax() > 1e-12 {
            return Err(Error::NotSpd);
        }
        if SymmetricEigen::new(cov.clone()).eigenvalues.min() <= 0.0 {
            return Err(Error::NotSpd);
        }
        if !(weight >= 0.0) {
            return Err(Error::InvalidInput("weight must be nonnegative".into()));
        }
        Ok(Self { mean, cov, weight })
    }

    /// Covariance `σ² Id`.
    pub fn isotropic(mean: &[f64], sigma: f64, weight: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(DVector::from_column_slice(mean), DMatrix::identity(d, d) * (sigma * sigma), weight)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `√(tr S / d)`, the standard deviation of an isotropic fit.
    pub fn sigma(&self) -> f64 {
        (self.cov.trace() / self.dim() as f64).max(0.0).sqrt()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let diff = DVector::from_column_slice(x) - &self.mean;
        let inv = self.cov.clone().try_inverse().unwrap_or_else(|| DMatrix::zeros(d, d));
        let q = (diff.transpose() * inv * &diff)[(0, 0)];
        let norm = ((2.0 * std::f64::consts::PI).powi(d as i32) * self.cov.determinant()).sqrt();
        (-0.5 * q).exp() / norm
    }
}

fn sym_pow(m: &DMatrix<f64>, p: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(|v| v.max(0.0).powf(p));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_pow(m, 0.5)
}

/// `‖Σ λ_i (S^{1/2} S_i S^{1/2})^{1/2} − S‖_F`.
pub fn fixed_point_residual(specs: &[GaussianSpec], s: &DMatrix<f64>) -> f64 {
    let r = sym_sqrt(s);
    let mut sum = DMatrix::zeros(s.nrows(), s.ncols());
    for g in specs {
        sum += sym_sqrt(&(&r * &g.cov * &r)) * g.weight;
    }
    (sum - s).norm()
}

/// Mean `Σ λ_i m_i`; covariance from the fixed-point map
/// `S ← S^{-1/2} (Σ λ_i (S^{1/2} S_i S^{1/2})^{1/2})² S^{-1/2}` started at `Σ λ_i S_i`.
pub fn barycenter_gaussian(specs: &[GaussianSpec]) -> Result<GaussianSpec> {
    let first = specs.first().ok_or(Error::EmptyMeasure)?;
    let d = first.dim();
    if d > 3 {
        return Err(Error::InvalidInput("dimension above 3".into()));
    }
    for g in specs {
        if g.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: g.dim() });
        }
        GaussianSpec::new(g.mean.clone(), g.cov.clone(), g.weight)?;
    }
    let total: f64 = specs.iter().map(|g| g.weight).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("weights sum to {total}, expected 1")));
    }
    let mut mean = DVector::zeros(d);
    let mut s = DMatrix::zeros(d, d);
    for g in specs {
        mean += &g.mean * g.weight;
        s += &g.cov * g.weight;
    }
    let mut iterations = 0;
    loop {
        let r = sym_sqrt(&s);
        let r_inv = sym_pow(&s, -0.5);
        let mut m = DMatrix::zeros(d, d);
        for g in specs {
            m += sym_sqrt(&(&r * &g.cov * &r)) * g.weight;
        }
        let mut next = &r_inv * &m * &m * &r_inv;
        next = (&next + next.transpose()) * 0.5;
        let change = (&next - &s).norm();
        s = next;
        iterations += 1;
        if change <= FIXED_POINT_TOL || iterations >= FIXED_POINT_ITERS {
            break;
        }
    }
    let residual = fixed_point_residual(specs, &s);
    if residual > 1e-10 * s.norm().max(1.0) {
        return Err(Error::NotConverged { iterations, residual });
    }
    Ok(GaussianSpec { mean, cov: s, weight: 1.0 })
}

/// Point-evaluated density at every cell center within `radius` of the mean,
/// normalized to unit mass. Far atoms may carry zero weight after rounding;
/// they are kept so the support is the full truncation disk.
pub fn sample_gaussian(spec: &GaussianSpec, grid: &Grid, radius: f64) -> Result<DiscreteMeasure> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("truncation radius must be positive".into()));
    }
    if grid.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: grid.dim() });
    }
    let mean: Vec<f64> = spec.mean.iter().copied().collect();
    let mut points = PointSet::empty(grid.dim());
    let mut weights = Vec::new();
    let mut c = vec![0.0; grid.dim()];
    for k in 0..grid.len() {
        grid.center_into(k, &mut c);
        if crate::measure::dist2(&c, &mean) <= radius * radius {
            points.push(&c);
            weights.push(spec.density(&c));
        }
    }
    if weights.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    DiscreteMeasure::new(points, weights)?.normalize()
}

#[derive(Clone, Debug)]
pub struct GaussianFit {
    pub spec: GaussianSpec,
    pub singular: bool,
}

/// Weighted mean and covariance of a discrete measure.
pub fn fit_gaussian(measure: &DiscreteMeasure) -> Result<GaussianFit> {
    let mass = measure.total_mass();
    if measure.is_empty() || !(mass > 0.0) {
        return Err(Error::EmptyMeasure);
    }
    let d = measure.dim();
    let mean = DVector::from_vec(measure.mean());
    let mut cov = DMatrix::zeros(d, d);
    for (p, &w) in measure.points().iter().zip(measure.weights()) {
        let diff = DVector::from_column_slice(p) - &mean;
        cov += &diff * diff.transpose() * (w / mass);
    }
    let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
    let singular = min_eig <= 1e-14 * cov.trace().max(1e-300);
    Ok(GaussianFit { spec: GaussianSpec { mean, cov, weight: 1.0 }, singular })
}
