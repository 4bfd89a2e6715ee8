use super::{DiscreteMeasure, PointSet};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum CostKind {
    /// `|x − s·z|^p` with `s = z_scale` (1 for distance powers, −1 gives `|x + z|^p`).
    Power { p: f64, z_scale: f64 },
    /// `xᵀ M z` with `M` a row-major `d_x × d_z` matrix.
    Bilinear { matrix: Vec<f64>, rows: usize, cols: usize },
    /// Dense `n_x × n_z` table indexed by atom and grid position.
    Tabulated { table: Vec<f64>, rows: usize, cols: usize },
}

/// Per-population cost `c_i(x, z) = factor · λ · base(x, z)`.
///
/// The primal LP uses `factor = 1` for power costs; the quadratic dual is
/// written with `λ/2·|x − z|²`, which is `factor = 1/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostSpec {
    pub kind: CostKind,
    pub lambda: f64,
    pub factor: f64,
    /// Lipschitz constant on the working box, when known.
    pub lipschitz: Option<f64>,
}

impl CostSpec {
    pub fn power(p: f64, lambda: f64) -> Self {
        Self { kind: CostKind::Power { p, z_scale: 1.0 }, lambda, factor: 1.0, lipschitz: None }
    }

    /// `λ/2·|x − z|²`, the convention of the dual route.
    pub fn half_quadratic(lambda: f64) -> Self {
        Self { factor: 0.5, ..Self::power(2.0, lambda) }
    }

    pub fn bilinear(matrix: Vec<f64>, rows: usize, cols: usize, lambda: f64) -> Self {
        Self { kind: CostKind::Bilinear { matrix, rows, cols }, lambda, factor: 1.0, lipschitz: None }
    }

    pub fn tabulated(table: Vec<f64>, rows: usize, cols: usize) -> Self {
        Self { kind: CostKind::Tabulated { table, rows, cols }, lambda: 1.0, factor: 1.0, lipschitz: None }
    }

    pub fn with_z_scale(mut self, s: f64) -> Self {
        if let CostKind::Power { z_scale, .. } = &mut self.kind {
            *z_scale = s;
        }
        self
    }

    pub fn with_lipschitz(mut self, lip: f64) -> Self {
        self.lipschitz = Some(lip);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("cost weight λ = {} must be positive", self.lambda)));
        }
        if !(self.factor > 0.0 && self.factor.is_finite()) {
            return Err(Error::InvalidInput("cost factor must be positive".into()));
        }
        match &self.kind {
            CostKind::Power { p, z_scale } => {
                if !(*p >= 1.0 && p.is_finite()) || !z_scale.is_finite() {
                    return Err(Error::InvalidInput(format!("power cost needs p ≥ 1, got {p}")));
                }
            }
            CostKind::Bilinear { matrix, rows, cols } | CostKind::Tabulated { table: matrix, rows, cols } => {
                if matrix.len() != rows * cols || matrix.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("cost matrix has wrong size or non-finite entries".into()));
                }
            }
        }
        Ok(())
    }

    /// True for `λ·f·|x − z|²`, the case covered by Minkowski localization
    /// and the dual route.
    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, CostKind::Power { p, z_scale } if p == 2.0 && z_scale == 1.0)
    }

    /// Pointwise evaluation; tabulated costs have no pointwise form.
    pub fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        let base = match &self.kind {
            CostKind::Power { p, z_scale } => power_base(x, z, *p, *z_scale),
            CostKind::Bilinear { matrix, rows, cols } => {
                if x.len() != *rows || z.len() != *cols {
                    return Err(Error::DimensionMismatch { expected: *rows, got: x.len() });
                }
                bilinear_base(matrix, *cols, x, z)
            }
            CostKind::Tabulated { .. } => return Err(Error::UnsupportedCost("pointwise evaluation")),
        };
        Ok(self.factor * self.lambda * base)
    }

    /// Dense row-major cost matrix between the atoms of `mu` and `zs`.
    pub fn matrix(&self, xs: &PointSet, zs: &PointSet) -> Result<Vec<f64>> {
        let (n, m) = (xs.len(), zs.len());
        let scale = self.factor * self.lambda;
        match &self.kind {
            CostKind::Tabulated { table, rows, cols } => {
                if *rows != n || *cols != m {
                    return Err(Error::InvalidInput(format!(
                        "tabulated cost is {rows}×{cols}, problem needs {n}×{m}"
                    )));
                }
                Ok(table.iter().map(|v| scale * v).collect())
            }
            _ => {
                if xs.dim() != zs.dim() && !matches!(self.kind, CostKind::Bilinear { .. }) {
                    return Err(Error::DimensionMismatch { expected: xs.dim(), got: zs.dim() });
                }
                let mut out = Vec::with_capacity(n * m);
                for x in xs.iter() {
                    for z in zs.iter() {
                        out.push(self.eval(x, z)?);
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn matrix_for(&self, mu: &DiscreteMeasure, zs: &PointSet) -> Result<Vec<f64>> {
        self.matrix(mu.points(), zs)
    }
}

#[inline]
fn power_base(x: &[f64], z: &[f64], p: f64, z_scale: f64) -> f64 {
    let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - z_scale * b).powi(2)).sum();
    if p == 2.0 {
        d2
    } else if p == 1.0 {
        d2.sqrt()
    } else {
        d2.powf(0.5 * p)
    }
}

fn bilinear_base(matrix: &[f64], cols: usize, x: &[f64], z: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(r, xr)| xr * matrix[r * cols..(r + 1) * cols].iter().zip(z).map(|(m, zc)| m * zc).sum::<f64>())
        .sum()
}
