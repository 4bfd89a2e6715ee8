//! Output files: measure text, density CSV, grayscale graymaps and the dual
//! iteration log.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use baryline::dual::IterationRecord;
use baryline::measure::compensated_sum;
use baryline::measure::io::write_measure;
use baryline::{DiscreteMeasure, SubGrid};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{CliError, Result};

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> Result<Self> {
        fs::create_dir_all(&root).map_err(|source| CliError::File { path: root.clone(), source })?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn create_file(&self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.path(name);
        let f = File::create(&path).map_err(|source| CliError::File { path: path.clone(), source })?;
        Ok((path, BufWriter::new(f)))
    }

    pub fn measure(&self, name: &str, m: &DiscreteMeasure) -> Result<PathBuf> {
        let (path, w) = self.create_file(name)?;
        write_measure(w, m)?;
        Ok(path)
    }

    /// Writes `<stem>.txt` with the positive atoms and, for grids of
    /// dimension one or two, `<stem>.csv` and `<stem>.pgm`.
    pub fn density(&self, stem: &str, nu: &DiscreteMeasure, cells: &SubGrid) -> Result<Vec<PathBuf>> {
        let mut written = vec![self.measure(&format!("{stem}.txt"), &nu.prune(0.0))?];
        let Some(raster) = Raster::new(nu, cells) else {
            log::warn!("no raster output for {}-dimensional grids", cells.grid().dim());
            return Ok(written);
        };
        written.push(raster.write_csv(&self.path(&format!("{stem}.csv")))?);
        written.push(raster.write_pgm(&self.path(&format!("{stem}.pgm")))?);
        Ok(written)
    }

    pub fn iterations(&self, name: &str, log: &[IterationRecord]) -> Result<PathBuf> {
        let (path, w) = self.create_file(name)?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iter", "phi", "grad_inf", "step"])?;
        for r in log {
            out.write_record([r.iter.to_string(), r.value.to_string(), r.grad_inf.to_string(), r.step.to_string()])?;
        }
        out.flush().map_err(|source| CliError::File { path: path.clone(), source })?;
        Ok(path)
    }

    pub fn points(&self, name: &str, cells: &SubGrid) -> Result<PathBuf> {
        let (path, w) = self.create_file(name)?;
        let mut out = csv::Writer::from_writer(w);
        let d = cells.grid().dim();
        out.write_record((0..d).map(|a| format!("x{a}")))?;
        for p in cells.points().iter() {
            out.write_record(p.iter().map(f64::to_string))?;
        }
        out.flush().map_err(|source| CliError::File { path: path.clone(), source })?;
        Ok(path)
    }
}

/// Cell masses on the full grid, row `r` holding the cells with second index `r`.
struct Raster {
    rows: usize,
    cols: usize,
    origin: [f64; 2],
    step: [f64; 2],
    values: Vec<f64>,
}

impl Raster {
    fn new(nu: &DiscreteMeasure, cells: &SubGrid) -> Option<Self> {
        let g = cells.grid();
        let (rows, step_y, y0) = match g.dim() {
            1 => (1, 1.0, 0.0),
            2 => (g.resolution()[1], g.cell_size(1), g.lower()[1] + 0.5 * g.cell_size(1)),
            _ => return None,
        };
        let cols = g.resolution()[0];
        let mut values = vec![0.0; rows * cols];
        // flat grid order already puts the first axis fastest
        for (&k, &w) in cells.cells().iter().zip(nu.weights()) {
            values[k] = w;
        }
        Some(Self {
            rows,
            cols,
            origin: [g.lower()[0] + 0.5 * g.cell_size(0), y0],
            step: [g.cell_size(0), step_y],
            values,
        })
    }

    fn write_csv(&self, path: &Path) -> Result<PathBuf> {
        let f = File::create(path).map_err(|source| CliError::File { path: path.into(), source })?;
        let mut out = csv::WriterBuilder::new().flexible(true).from_writer(BufWriter::new(f));
        out.write_record(["rows", "cols", "x0", "y0", "dx", "dy", "mass"])?;
        out.write_record([
            self.rows.to_string(),
            self.cols.to_string(),
            self.origin[0].to_string(),
            self.origin[1].to_string(),
            self.step[0].to_string(),
            self.step[1].to_string(),
            compensated_sum(&self.values).to_string(),
        ])?;
        for row in self.values.chunks_exact(self.cols) {
            out.write_record(row.iter().map(f64::to_string))?;
        }
        out.flush().map_err(|source| CliError::File { path: path.into(), source })?;
        Ok(path.into())
    }

    /// 8-bit graymap scaled so the heaviest cell is white; top row is the largest `y`.
    fn write_pgm(&self, path: &Path) -> Result<PathBuf> {
        let max = self.values.iter().copied().fold(0.0, f64::max);
        let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
        let mut pixels = Vec::with_capacity(self.values.len());
        for row in self.values.chunks_exact(self.cols).rev() {
            pixels.extend(row.iter().map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8));
        }
        let f = File::create(path).map_err(|source| CliError::File { path: path.into(), source })?;
        PnmEncoder::new(BufWriter::new(f))
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&pixels, self.cols as u32, self.rows as u32, ExtendedColorType::L8)?;
        Ok(path.into())
    }
}
