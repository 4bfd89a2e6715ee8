//! Sparse revised simplex for equality-form linear programs
//! `min cᵀx  s.t.  A x = b, x ≥ 0`.
//!
//! Two phases with one artificial per row; Dantzig partial pricing with
//! smallest-index tie breaks, Harris ratio test, and a switch to Bland's rule
//! whenever a run of degenerate pivots makes no progress, which guarantees
//! termination. Results are deterministic for identical input.

mod lu;
mod simplex;

use std::io::Write;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Equality-form LP over nonnegative variables, stored as row triplets.
#[derive(Clone, Debug, Default)]
pub struct LpProblem {
    n_vars: usize,
    objective: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

impl LpProblem {
    pub fn new(n_vars: usize) -> Self {
        Self { n_vars, objective: vec![0.0; n_vars], rows: Vec::new(), rhs: Vec::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_cost(&mut self, var: usize, c: f64) {
        self.objective[var] = c;
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }

    /// Appends the constraint `Σ a_j x_j = rhs`; repeated columns are summed.
    pub fn add_row(&mut self, mut entries: Vec<(usize, f64)>, rhs: f64) -> usize {
        entries.sort_by_key(|e| e.0);
        entries.dedup_by(|later, first| {
            if later.0 == first.0 {
                first.1 += later.1;
                true
            } else {
                false
            }
        });
        entries.retain(|e| e.1 != 0.0);
        self.rows.push(entries);
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite objective coefficient".into()));
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::InvalidInput(format!("constraint row {r} is empty")));
            }
            if !self.rhs[r].is_finite() {
                return Err(Error::InvalidInput(format!("non-finite rhs in row {r}")));
            }
            for &(j, v) in row {
                if j >= self.n_vars {
                    return Err(Error::InvalidInput(format!("row {r} references variable {j}")));
                }
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!("non-finite entry in row {r}")));
                }
            }
        }
        Ok(())
    }

    /// `max_r |(A x − b)_r|`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| (row.iter().map(|&(j, v)| v * x[j]).sum::<f64>() - b).abs())
            .fold(0.0, f64::max)
    }

    /// Reduced costs `c − Aᵀy` for the given row multipliers.
    pub fn reduced_costs(&self, duals: &[f64]) -> Vec<f64> {
        let mut d = self.objective.clone();
        for (row, &y) in self.rows.iter().zip(duals) {
            for &(j, v) in row {
                d[j] -= v * y;
            }
        }
        d
    }

    /// Debug dump: a `rows cols nnz` header, then `row col value` triplets,
    /// then `c` lines for the objective and `b` lines for the right-hand side.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.n_rows(), self.n_vars, self.nnz())?;
        for (r, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                writeln!(w, "{r} {j} {v:e}")?;
            }
        }
        for (j, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                writeln!(w, "c {j} {c:e}")?;
            }
        }
        for (r, b) in self.rhs.iter().enumerate() {
            writeln!(w, "b {r} {b:e}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Defaults to `50 · (rows + cols)`.
    pub max_iters: Option<usize>,
    /// Primal feasibility and optimality tolerance.
    pub tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { max_iters: None, tol: 1e-9 }
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values; for non-optimal statuses the last basis visited.
    pub x: Vec<f64>,
    pub value: f64,
    /// Row multipliers `y` with `Aᵀy ≤ c` at optimality.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Turns a non-optimal status into an error.
    pub fn into_optimal(self) -> Result<Self> {
        if self.is_optimal() {
            Ok(self)
        } else {
            Err(Error::Solver { status: self.status, iterations: self.iterations })
        }
    }
}

pub fn solve(problem: &LpProblem, opts: &SolveOptions) -> Result<LpSolution> {
    problem.validate()?;
    Ok(simplex::Simplex::new(problem, opts).run())
}
