//! Run configuration: a TOML file with a `[z]` grid, one `[[measure]]` table
//! per population and an optional `[output]` table.
//!
//! ```toml
//! [z]
//! lower = [0.0, 0.0]
//! upper = [1.0, 1.0]
//! resolution = 50
//!
//! [[measure]]
//! lambda = 0.5
//! box = { lower = [0.1, 0.1], upper = [0.5, 0.5] }
//! grid = { lower = [0.0, 0.0], upper = [1.0, 1.0], resolution = 50 }
//!
//! [[measure]]
//! lambda = 0.5
//! file = "b.txt"
//! ```

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use baryline::gaussian::{sample_gaussian, GaussianSpec};
use baryline::measure::io::read_measure;
use baryline::measure::{quantize, Density};
use baryline::{CostSpec, DiscreteMeasure, Grid, PointSet};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub z: GridConfig,
    #[serde(default)]
    pub measure: Vec<MeasureConfig>,
    /// Second marginal for plain transport runs with a single population.
    pub target: Option<MeasureConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(skip)]
    base: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: Resolution,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CostConfig {
    /// `λ |x − s z|^p`.
    Power {
        p: f64,
        #[serde(default = "one")]
        z_scale: f64,
    },
    /// `λ xᵀ M z`, rows of `M` indexed by the coordinates of `x`.
    Bilinear { matrix: Vec<Vec<f64>> },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianConfig {
    pub mean: Vec<f64>,
    pub sigma: Option<f64>,
    /// Row-major covariance, used instead of `sigma`.
    pub cov: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    pub radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    pub lambda: Option<f64>,
    pub cost: Option<CostConfig>,
    pub file: Option<PathBuf>,
    pub dirac: Option<Vec<f64>>,
    pub points: Option<Vec<Vec<f64>>>,
    pub weights: Option<Vec<f64>>,
    #[serde(rename = "box")]
    pub indicator: Option<BoxConfig>,
    pub gaussian: Option<GaussianConfig>,
    /// Quantization grid for `box` and `gaussian` sources, optional for the others.
    pub grid: Option<GridConfig>,
}

impl GridConfig {
    pub fn build(&self, key: &str) -> Result<Grid> {
        let d = self.lower.len();
        let res = match &self.resolution {
            Resolution::Uniform(n) => vec![*n; d],
            Resolution::PerAxis(r) => r.clone(),
        };
        Grid::new(self.lower.clone(), self.upper.clone(), res).map_err(|e| CliError::config(key, e.to_string()))
    }

    pub fn with_resolution(&self, n: usize) -> Self {
        Self { resolution: Resolution::Uniform(n), ..self.clone() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::File { path: path.into(), source })?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Toml { path: path.into(), source: Box::new(e) })?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        match (flag, &self.output.dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => self.base.join(p),
            (None, None) => PathBuf::from("out"),
        }
    }

    pub fn require_measures(&self, min: usize) -> Result<()> {
        if self.measure.len() < min {
            return Err(CliError::config("measure", format!("need at least {min}, found {}", self.measure.len())));
        }
        Ok(())
    }

    pub fn measures(&self) -> Result<Vec<DiscreteMeasure>> {
        self.measure.iter().enumerate().map(|(i, m)| m.build(&format!("measure[{i}]"), &self.base)).collect()
    }

    pub fn target(&self) -> Result<Option<DiscreteMeasure>> {
        self.target.as_ref().map(|t| t.build("target", &self.base)).transpose()
    }

    /// `λ_i`, defaulting to `1/I` when no population sets one.
    pub fn lambdas(&self) -> Result<Vec<f64>> {
        let n = self.measure.len();
        let given = self.measure.iter().filter(|m| m.lambda.is_some()).count();
        if given != 0 && given != n {
            return Err(CliError::config("measure.lambda", "set on every measure or on none"));
        }
        let lambdas: Vec<f64> = self.measure.iter().map(|m| m.lambda.unwrap_or(1.0 / n as f64)).collect();
        for (i, &l) in lambdas.iter().enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(CliError::config(format!("measure[{i}].lambda"), format!("{l} is not positive")));
            }
        }
        Ok(lambdas)
    }

    pub fn costs(&self) -> Result<Vec<CostSpec>> {
        let lambdas = self.lambdas()?;
        self.measure
            .iter()
            .zip(lambdas)
            .enumerate()
            .map(|(i, (m, l))| cost_spec(m.cost.as_ref(), l, &format!("measure[{i}].cost")))
            .collect()
    }

    pub fn target_cost(&self) -> Result<CostSpec> {
        let first = self.measure.first().and_then(|m| m.cost.as_ref());
        cost_spec(first, 1.0, "measure[0].cost")
    }

    pub fn gaussians(&self) -> Result<Vec<GaussianSpec>> {
        let lambdas = self.lambdas()?;
        self.measure
            .iter()
            .zip(lambdas)
            .enumerate()
            .map(|(i, (m, l))| {
                let key = format!("measure[{i}].gaussian");
                let g = m.gaussian.as_ref().ok_or_else(|| CliError::config(&key, "missing"))?;
                g.spec(l, &key)
            })
            .collect()
    }
}

fn cost_spec(cfg: Option<&CostConfig>, lambda: f64, key: &str) -> Result<CostSpec> {
    let spec = match cfg {
        None => CostSpec::power(2.0, lambda),
        Some(CostConfig::Power { p, z_scale }) => CostSpec::power(*p, lambda).with_z_scale(*z_scale),
        Some(CostConfig::Bilinear { matrix }) => {
            let rows = matrix.len();
            let cols = matrix.first().map_or(0, Vec::len);
            if rows == 0 || matrix.iter().any(|r| r.len() != cols) {
                return Err(CliError::config(format!("{key}.matrix"), "rows must be nonempty and equally long"));
            }
            CostSpec::bilinear(matrix.concat(), rows, cols, lambda)
        }
    };
    spec.validate().map_err(|e| CliError::config(key, e.to_string()))?;
    Ok(spec)
}

impl GaussianConfig {
    fn spec(&self, weight: f64, key: &str) -> Result<GaussianSpec> {
        let d = self.mean.len();
        let cov = match (&self.sigma, &self.cov) {
            (Some(s), None) => DMatrix::identity(d, d) * (s * s),
            (None, Some(rows)) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(CliError::config(format!("{key}.cov"), format!("expected a {d}×{d} matrix")));
                }
                DMatrix::from_row_slice(d, d, &rows.concat())
            }
            _ => return Err(CliError::config(key, "set exactly one of `sigma` and `cov`")),
        };
        GaussianSpec::new(DVector::from_column_slice(&self.mean), cov, weight)
            .map_err(|e| CliError::config(key, e.to_string()))
    }
}

impl MeasureConfig {
    fn build(&self, key: &str, base: &Path) -> Result<DiscreteMeasure> {
        let sources = [
            self.file.is_some(),
            self.dirac.is_some(),
            self.points.is_some(),
            self.indicator.is_some(),
            self.gaussian.is_some(),
        ];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(CliError::config(key, "set exactly one of `file`, `dirac`, `points`, `box`, `gaussian`"));
        }
        let grid = self.grid.as_ref().map(|g| g.build(&format!("{key}.grid"))).transpose()?;
        let need_grid = || grid.clone().ok_or_else(|| CliError::config(format!("{key}.grid"), "required for this source"));
        let invalid = |field: &str, e: baryline::Error| CliError::config(format!("{key}.{field}"), e.to_string());

        let raw = if let Some(path) = &self.file {
            let path = base.join(path);
            let f = File::open(&path).map_err(|source| CliError::File { path: path.clone(), source })?;
            read_measure(BufReader::new(f)).map_err(|e| invalid("file", e))?
        } else if let Some(p) = &self.dirac {
            DiscreteMeasure::dirac(p).map_err(|e| invalid("dirac", e))?
        } else if let Some(pts) = &self.points {
            let set = PointSet::from_points(pts).map_err(|e| invalid("points", e))?;
            match &self.weights {
                Some(w) => DiscreteMeasure::new(set, w.clone()).map_err(|e| invalid("weights", e))?,
                None => DiscreteMeasure::uniform(set).map_err(|e| invalid("points", e))?,
            }
        } else if let Some(b) = &self.indicator {
            let grid = need_grid()?;
            if b.lower.len() != grid.dim() || b.upper.len() != grid.dim() {
                return Err(CliError::config(format!("{key}.box"), "dimension differs from the grid"));
            }
            let inside = |x: &[f64]| {
                let hit = x.iter().zip(&b.lower).zip(&b.upper).all(|((c, lo), hi)| (lo..=hi).contains(&c));
                if hit { 1.0 } else { 0.0 }
            };
            return quantize(Density::Function(&inside), &grid)
                .and_then(DiscreteMeasure::normalize)
                .map_err(|e| invalid("box", e));
        } else {
            let g = self.gaussian.as_ref().expect("one source is set");
            let spec = g.spec(1.0, &format!("{key}.gaussian"))?;
            // zero-weight atoms past the tail carry no information for the solvers
            return sample_gaussian(&spec, &need_grid()?, g.radius)
                .map(|m| m.prune(0.0))
                .and_then(DiscreteMeasure::normalize)
                .map_err(|e| invalid("gaussian", e));
        };
        if self.weights.is_some() && self.points.is_none() {
            return Err(CliError::config(format!("{key}.weights"), "only valid together with `points`"));
        }
        let m = match &grid {
            Some(g) => quantize(Density::Points(&raw), g).map_err(|e| invalid("grid", e))?,
            None => raw,
        };
        m.normalize().map_err(|e| invalid("weights", e))
    }
}
