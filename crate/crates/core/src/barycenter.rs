//! Coupling linear program for matching-for-teams equilibria and barycenters.
//!
//! Unknowns are the plans `γ_i^{j,k}` between the atoms of `μ_i` and the
//! candidate quality points `z_k`. Constraints fix the first marginal of each
//! plan and force a common second marginal, written as the chain
//! `Σ_j γ_i^{j,k} = Σ_j γ_{i+1}^{j,k}`. Each chain block carries exactly one
//! redundant total-mass row, which is dropped.

use std::time::Instant;

use crate::lp::{self, LpProblem, SolveOptions};
use crate::measure::{CostSpec, DiscreteMeasure, Grid, PointSet, SubGrid, TransportPlan, PLAN_EPS};
use crate::{Error, Result};

/// Mass below which a quality point is not counted as support.
pub const SUPPORT_EPS: f64 = 1e-12;
/// Largest tuple count the multi-marginal oracle will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// The discretized coupling LP together with its variable layout.
#[derive(Clone, Debug)]
pub struct Dlp {
    pub problem: LpProblem,
    /// First variable index of population `i`; its block is `N_i × N_0`.
    offsets: Vec<usize>,
    sizes: Vec<usize>,
    n_z: usize,
    costs: Vec<Vec<f64>>,
}

impl Dlp {
    pub fn n_populations(&self) -> usize {
        self.sizes.len()
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    #[inline]
    pub fn var(&self, i: usize, j: usize, k: usize) -> usize {
        self.offsets[i] + j * self.n_z + k
    }

    /// Dense `N_i × N_0` cost matrix of population `i`.
    pub fn cost_matrix(&self, i: usize) -> &[f64] {
        &self.costs[i]
    }
}

fn check_inputs(measures: &[DiscreteMeasure], costs: &[CostSpec], zgrid: &PointSet) -> Result<()> {
    if measures.is_empty() {
        return Err(Error::InvalidInput("at least one population is required".into()));
    }
    if measures.len() != costs.len() {
        return Err(Error::InvalidInput(format!("{} measures but {} costs", measures.len(), costs.len())));
    }
    if zgrid.is_empty() {
        return Err(Error::InvalidInput("quality grid is empty".into()));
    }
    for (i, (m, c)) in measures.iter().zip(costs).enumerate() {
        if m.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        c.validate()?;
        if (m.total_mass() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("measure {i} has mass {}, expected 1", m.total_mass())));
        }
    }
    Ok(())
}

pub fn build_dlp(measures: &[DiscreteMeasure], costs: &[CostSpec], zgrid: &PointSet) -> Result<Dlp> {
    check_inputs(measures, costs, zgrid)?;
    let n_z = zgrid.len();
    let sizes: Vec<usize> = measures.iter().map(DiscreteMeasure::len).collect();
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut total = 0;
    for &s in &sizes {
        offsets.push(total);
        total += s * n_z;
    }
    let cost_mats: Vec<Vec<f64>> =
        measures.iter().zip(costs).map(|(m, c)| c.matrix_for(m, zgrid)).collect::<Result<_>>()?;

    let mut lp = LpProblem::new(total);
    for (i, mat) in cost_mats.iter().enumerate() {
        for (v, &c) in mat.iter().enumerate() {
            lp.set_cost(offsets[i] + v, c);
        }
    }
    for (i, m) in measures.iter().enumerate() {
        // the last atom row of every population after the first is implied
        let rows = if i == 0 { m.len() } else { m.len() - 1 };
        for j in 0..rows {
            let base = offsets[i] + j * n_z;
            lp.add_row((0..n_z).map(|k| (base + k, 1.0)).collect(), m.weights()[j]);
        }
    }
    for i in 0..measures.len().saturating_sub(1) {
        for k in 0..n_z {
            let mut row = Vec::with_capacity(sizes[i] + sizes[i + 1]);
            row.extend((0..sizes[i]).map(|j| (offsets[i] + j * n_z + k, 1.0)));
            row.extend((0..sizes[i + 1]).map(|j| (offsets[i + 1] + j * n_z + k, -1.0)));
            lp.add_row(row, 0.0);
        }
    }
    Ok(Dlp { problem: lp, offsets, sizes, n_z, costs: cost_mats })
}

#[derive(Clone, Debug)]
pub struct BarycenterResult {
    /// Weights `ν^k` on every candidate point (zeros included).
    pub nu: DiscreteMeasure,
    pub plans: Vec<TransportPlan>,
    pub value: f64,
    /// `Σ_{j,k} c_i(x_i^j, z^k) γ_i^{j,k}` per population.
    pub population_costs: Vec<f64>,
    pub iterations: usize,
}

impl BarycenterResult {
    /// Indices of candidate points carrying mass.
    pub fn support(&self) -> Vec<usize> {
        self.nu.support(SUPPORT_EPS)
    }

    /// Largest spread across populations of the plan column sums.
    pub fn marginal_spread(&self) -> f64 {
        let sums: Vec<Vec<f64>> = self.plans.iter().map(TransportPlan::col_sums).collect();
        (0..self.nu.len())
            .map(|k| {
                let (lo, hi) = sums
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s[k]), hi.max(s[k])));
                hi - lo
            })
            .fold(0.0, f64::max)
    }
}

pub fn solve_barycenter(
    measures: &[DiscreteMeasure],
    costs: &[CostSpec],
    zgrid: &PointSet,
    opts: &SolveOptions,
) -> Result<BarycenterResult> {
    let started = Instant::now();
    let dlp = build_dlp(measures, costs, zgrid)?;
    log::info!(
        "coupling LP: {} populations, {} quality points, {} variables, {} rows (cost factors {:?})",
        measures.len(),
        dlp.n_z,
        dlp.problem.n_vars(),
        dlp.problem.n_rows(),
        costs.iter().map(|c| c.factor).collect::<Vec<_>>()
    );
    let sol = lp::solve(&dlp.problem, opts)?.into_optimal()?;
    log::info!("coupling LP solved in {} iterations, {:.2?}", sol.iterations, started.elapsed());

    let n_z = dlp.n_z;
    let mut plans = Vec::with_capacity(measures.len());
    let mut population_costs = Vec::with_capacity(measures.len());
    for (i, &n_i) in dlp.sizes.iter().enumerate() {
        let block = &sol.x[dlp.offsets[i]..dlp.offsets[i] + n_i * n_z];
        let entries = block
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(v, &x)| (v / n_z, v % n_z, x))
            .collect();
        let plan = TransportPlan::new(n_i, n_z, entries, PLAN_EPS);
        population_costs.push(plan.cost(&dlp.costs[i]));
        plans.push(plan);
    }
    let nu_weights: Vec<f64> = plans[0].col_sums().into_iter().map(|w| w.max(0.0)).collect();
    let nu = DiscreteMeasure::new(zgrid.clone(), nu_weights)?.normalize()?;
    Ok(BarycenterResult { nu, plans, value: sol.value, population_costs, iterations: sol.iterations })
}

/// Multi-marginal reformulation: the cost of a tuple is
/// `min_k Σ_i c_i(x_i, z_k)` and the coupling `η` has marginals `μ_i`.
/// Its optimal value equals that of the coupling LP.
pub fn multimarginal_oracle(measures: &[DiscreteMeasure], costs: &[CostSpec], zgrid: &PointSet) -> Result<f64> {
    check_inputs(measures, costs, zgrid)?;
    let size: u128 = measures.iter().map(|m| m.len() as u128).product();
    if size > ENUMERATION_LIMIT {
        return Err(Error::EnumerationBound { size, limit: ENUMERATION_LIMIT });
    }
    let n_z = zgrid.len();
    let mats: Vec<Vec<f64>> =
        measures.iter().zip(costs).map(|(m, c)| c.matrix_for(m, zgrid)).collect::<Result<_>>()?;
    let sizes: Vec<usize> = measures.iter().map(DiscreteMeasure::len).collect();
    let n_tuples = size as usize;

    let mut tuple_cost = vec![0.0; n_tuples];
    let mut idx = vec![0usize; sizes.len()];
    let mut acc = vec![0.0; n_z];
    for t in 0..n_tuples {
        decode(t, &sizes, &mut idx);
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (i, &j) in idx.iter().enumerate() {
            let row = &mats[i][j * n_z..(j + 1) * n_z];
            for (a, c) in acc.iter_mut().zip(row) {
                *a += c;
            }
        }
        tuple_cost[t] = acc.iter().copied().fold(f64::INFINITY, f64::min);
    }

    let mut lp = LpProblem::new(n_tuples);
    for (t, &c) in tuple_cost.iter().enumerate() {
        lp.set_cost(t, c);
    }
    let mut rows: Vec<Vec<Vec<(usize, f64)>>> = sizes.iter().map(|&s| vec![Vec::new(); s]).collect();
    for t in 0..n_tuples {
        decode(t, &sizes, &mut idx);
        for (i, &j) in idx.iter().enumerate() {
            rows[i][j].push((t, 1.0));
        }
    }
    for (i, pop_rows) in rows.into_iter().enumerate() {
        let keep = if i == 0 { sizes[i] } else { sizes[i] - 1 };
        for (j, row) in pop_rows.into_iter().enumerate().take(keep) {
            lp.add_row(row, measures[i].weights()[j]);
        }
    }
    Ok(lp::solve(&lp, &SolveOptions::default())?.into_optimal()?.value)
}

/// Mixed-radix decoding with the last population varying fastest.
fn decode(mut t: usize, sizes: &[usize], out: &mut [usize]) {
    for i in (0..sizes.len()).rev() {
        out[i] = t % sizes[i];
        t /= sizes[i];
    }
}

/// Second stage of the two-stage strategy: re-solves on the cells of a grid
/// `factor` times finer, restricted to coarse cells within one cell of the
/// coarse support.
pub fn refine(
    measures: &[DiscreteMeasure],
    costs: &[CostSpec],
    coarse: &BarycenterResult,
    coarse_grid: &SubGrid,
    factor: usize,
    opts: &SolveOptions,
) -> Result<(BarycenterResult, SubGrid)> {
    if coarse.nu.len() != coarse_grid.len() {
        return Err(Error::InvalidInput("coarse result does not match its grid".into()));
    }
    let refined = refined_cells(coarse_grid, &coarse.support(), factor)?;
    if refined.is_empty() {
        return Err(Error::InvalidInput("refined grid is empty".into()));
    }
    let result = solve_barycenter(measures, costs, &refined.points(), opts)?;
    Ok((result, refined))
}

/// Fine cells whose parent lies in the one-cell neighborhood of `support`
/// (positions into `coarse`).
pub fn refined_cells(coarse: &SubGrid, support: &[usize], factor: usize) -> Result<SubGrid> {
    let grid = coarse.grid();
    let fine: Grid = grid.refined(factor)?;
    let mut parents = vec![false; grid.len()];
    for &pos in support {
        for c in grid.neighborhood(coarse.cells()[pos], 1) {
            parents[c] = true;
        }
    }
    let mut cells = Vec::new();
    for (c, _) in parents.iter().enumerate().filter(|(_, &p)| p) {
        let base: Vec<usize> = grid.multi_index(c).iter().map(|i| i * factor).collect();
        let mut idx = base.clone();
        loop {
            cells.push(fine.flat_index(&idx));
            let mut a = 0;
            loop {
                if a == idx.len() {
                    break;
                }
                if idx[a] + 1 < base[a] + factor {
                    idx[a] += 1;
                    break;
                }
                idx[a] = base[a];
                a += 1;
            }
            if a == idx.len() {
                break;
            }
        }
    }
    SubGrid::new(fine, cells)
}
