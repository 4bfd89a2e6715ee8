//! Plain-text measure files: one atom per line, `x1 [x2 [x3]] weight`,
//! with `#` starting a comment.

use std::io::{BufRead, Write};

use super::{DiscreteMeasure, PointSet};
use crate::{Error, Result};

pub fn read_measure<R: BufRead>(reader: R) -> Result<DiscreteMeasure> {
    let mut dim = None;
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<f64> = body
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { line: lineno + 1, msg: e.to_string() })?;
        let d = fields.len().checked_sub(1).filter(|d| (1..=3).contains(d)).ok_or_else(|| Error::Parse {
            line: lineno + 1,
            msg: format!("expected 2 to 4 fields, found {}", fields.len()),
        })?;
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(Error::Parse { line: lineno + 1, msg: format!("dimension {d} after {prev}") });
            }
            _ => {}
        }
        coords.extend_from_slice(&fields[..d]);
        weights.push(fields[d]);
    }
    let dim = dim.ok_or(Error::EmptyMeasure)?;
    DiscreteMeasure::new(PointSet::new(dim, coords)?, weights)
}

pub fn write_measure<W: Write>(mut w: W, measure: &DiscreteMeasure) -> Result<()> {
    writeln!(w, "# {} atoms, dimension {}", measure.len(), measure.dim())?;
    for (p, wt) in measure.points().iter().zip(measure.weights()) {
        for c in p {
            write!(w, "{c} ")?;
        }
        writeln!(w, "{wt}")?;
    }
    Ok(())
}
