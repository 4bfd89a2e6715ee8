//! Dual route for quadratic costs: the concave, piecewise-linear objective
//!
//! `Φ(φ) = Σ_i Σ_j w_i^j min_k { a_i |y_i^j − z_k|² − φ_i^k }`, `Σ_i φ_i^k = 0`,
//!
//! maximized with L-BFGS and a weak Wolfe line search. The last row of `φ` is
//! eliminated, so the optimizer works on `(I−1)·N_k` free variables.

use std::collections::VecDeque;

use crate::kdtree::{LiftedIndex, SearchStats};
use crate::measure::{dist2, CostSpec, DiscreteMeasure, PointSet};
use crate::reconstruct::{active_set, min_norm_supergradient, RecoverOptions};
use crate::{Error, Result};

/// Quadratic barycenter problem seen from the dual side.
#[derive(Clone, Debug)]
pub struct DualProblem {
    /// Populations normalized to unit mass, i.e. `w_i^j = c(N_i) ν_i^j`.
    measures: Vec<DiscreteMeasure>,
    /// Coefficient `a_i` of `a_i |y − z|²`; `λ_i / 2` for barycenters.
    coef: Vec<f64>,
    z: PointSet,
}

impl DualProblem {
    /// Barycenter weights `λ_i`; the costs are `(λ_i/2)|y − z|²`.
    pub fn new(measures: &[DiscreteMeasure], lambdas: &[f64], z: PointSet) -> Result<Self> {
        if lambdas.len() != measures.len() {
            return Err(Error::InvalidInput(format!("{} weights for {} measures", lambdas.len(), measures.len())));
        }
        if lambdas.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidInput("weights must be positive".into()));
        }
        Self::with_coefficients(measures, lambdas.iter().map(|l| 0.5 * l).collect(), z)
    }

    /// Any costs of the form `a |x − z|²`, read from their specs.
    pub fn from_costs(measures: &[DiscreteMeasure], costs: &[CostSpec], z: PointSet) -> Result<Self> {
        if costs.len() != measures.len() {
            return Err(Error::InvalidInput(format!("{} costs for {} measures", costs.len(), measures.len())));
        }
        let mut coef = Vec::with_capacity(costs.len());
        for c in costs {
            c.validate()?;
            if !c.is_quadratic() {
                return Err(Error::UnsupportedCost("the dual route needs quadratic costs"));
            }
            coef.push(c.factor * c.lambda);
        }
        Self::with_coefficients(measures, coef, z)
    }

    fn with_coefficients(measures: &[DiscreteMeasure], coef: Vec<f64>, z: PointSet) -> Result<Self> {
        if measures.is_empty() {
            return Err(Error::InvalidInput("at least one population is required".into()));
        }
        if z.is_empty() {
            return Err(Error::InvalidInput("quality grid is empty".into()));
        }
        let mut normalized = Vec::with_capacity(measures.len());
        for m in measures {
            if m.dim() != z.dim() {
                return Err(Error::DimensionMismatch { expected: z.dim(), got: m.dim() });
            }
            normalized.push(m.clone().normalize()?);
        }
        Ok(Self { measures: normalized, coef, z })
    }

    pub fn n_populations(&self) -> usize {
        self.measures.len()
    }

    pub fn n_z(&self) -> usize {
        self.z.len()
    }

    pub fn n_free(&self) -> usize {
        (self.n_populations() - 1) * self.n_z()
    }

    pub fn measures(&self) -> &[DiscreteMeasure] {
        &self.measures
    }

    pub fn z(&self) -> &PointSet {
        &self.z
    }

    pub fn coefficient(&self, i: usize) -> f64 {
        self.coef[i]
    }

    /// `a_i |y_i^j − z_k|²`.
    #[inline]
    pub fn cost(&self, i: usize, j: usize, k: usize) -> f64 {
        self.coef[i] * dist2(self.measures[i].point(j), self.z.point(k))
    }

    /// Equivalent cost specs for the coupling LP.
    pub fn costs(&self) -> Vec<CostSpec> {
        self.coef.iter().map(|&a| CostSpec::power(2.0, a)).collect()
    }
}

/// Potentials `φ_i^k` with the last row stored implicitly as `−Σ_{i<I} φ_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPotentials {
    n_pop: usize,
    n_z: usize,
    free: Vec<f64>,
}

impl DualPotentials {
    pub fn zeros(problem: &DualProblem) -> Self {
        Self { n_pop: problem.n_populations(), n_z: problem.n_z(), free: vec![0.0; problem.n_free()] }
    }

    pub fn from_free(problem: &DualProblem, free: Vec<f64>) -> Result<Self> {
        if free.len() != problem.n_free() {
            return Err(Error::DimensionMismatch { expected: problem.n_free(), got: free.len() });
        }
        Ok(Self { n_pop: problem.n_populations(), n_z: problem.n_z(), free })
    }

    pub fn free(&self) -> &[f64] {
        &self.free
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        if i + 1 < self.n_pop {
            self.free[i * self.n_z + k]
        } else {
            -(0..self.n_pop - 1).map(|r| self.free[r * self.n_z + k]).sum::<f64>()
        }
    }

    /// Row `i` of the full table.
    pub fn row(&self, i: usize) -> Vec<f64> {
        if i + 1 < self.n_pop {
            return self.free[i * self.n_z..(i + 1) * self.n_z].to_vec();
        }
        let mut last = vec![0.0; self.n_z];
        for r in 0..self.n_pop - 1 {
            for (l, f) in last.iter_mut().zip(&self.free[r * self.n_z..(r + 1) * self.n_z]) {
                *l -= f;
            }
        }
        last
    }

    /// Full `I × N_k` table, row-major.
    pub fn table(&self) -> Vec<f64> {
        (0..self.n_pop).flat_map(|i| self.row(i)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct DualState {
    pub potentials: DualPotentials,
    pub value: f64,
    /// Supergradient in the free coordinates.
    pub supergrad: Vec<f64>,
    /// `k(i,j)*` for every atom.
    pub assignments: Vec<Vec<usize>>,
    /// `φ_i^{c_i}(y_i^j)` for every atom.
    pub transforms: Vec<Vec<f64>>,
    /// kd-tree nodes visited during the evaluation.
    pub visited: usize,
}

/// Evaluates `Φ` and one extremal supergradient, using one lifted kd-tree per
/// population for the inner minima.
pub fn eval_phi(problem: &DualProblem, potentials: &DualPotentials) -> Result<DualState> {
    let n_pop = problem.n_populations();
    let n_z = problem.n_z();
    let mut full_grad = vec![0.0; n_pop * n_z];
    let mut assignments = Vec::with_capacity(n_pop);
    let mut transforms = Vec::with_capacity(n_pop);
    let mut value = 0.0;
    let mut stats = SearchStats::default();
    let mut lifted = Vec::with_capacity(problem.z.dim() + 1);
    for (i, mu) in problem.measures.iter().enumerate() {
        let phi = potentials.row(i);
        let index = LiftedIndex::new(&problem.z, problem.coef[i], &phi)?;
        let mut assign = Vec::with_capacity(mu.len());
        let mut trans = Vec::with_capacity(mu.len());
        for (j, &w) in mu.weights().iter().enumerate() {
            let k = index.argmin(mu.point(j), &mut lifted, &mut stats);
            let t = problem.cost(i, j, k) - phi[k];
            value += w * t;
            full_grad[i * n_z + k] -= w;
            assign.push(k);
            trans.push(t);
        }
        assignments.push(assign);
        transforms.push(trans);
    }
    if !value.is_finite() {
        return Err(Error::InvalidInput("dual objective is not finite".into()));
    }
    let last = (n_pop - 1) * n_z;
    let supergrad = (0..last).map(|v| full_grad[v] - full_grad[last + v % n_z]).collect();
    Ok(DualState { potentials: potentials.clone(), value, supergrad, assignments, transforms, visited: stats.visited })
}

/// Checks `Φ(ψ) ≤ Φ(φ) + g(φ)·(ψ − φ) + 1e-10`.
pub fn supergradient_check(problem: &DualProblem, state: &DualState, psi: &DualPotentials) -> Result<bool> {
    let other = eval_phi(problem, psi)?;
    let lin: f64 = state
        .supergrad
        .iter()
        .zip(psi.free().iter().zip(state.potentials.free()))
        .map(|(g, (p, f))| g * (p - f))
        .sum();
    Ok(other.value <= state.value + lin + 1e-10)
}

#[derive(Clone, Debug)]
pub struct MaximizeOptions {
    /// Stored curvature pairs. Short memories stall on kinks long before the
    /// optimum, so the default keeps well over the typical free-variable count.
    pub memory: usize,
    pub max_iters: usize,
    pub c1: f64,
    pub c2: f64,
    /// Iterations without relative progress above `tol` before the memory is flushed.
    pub stall_window: usize,
    pub tol: f64,
    /// Consecutive unproductive restarts after which the run stops.
    pub max_restarts: usize,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        Self { memory: 1000, max_iters: 5000, c1: 1e-4, c2: 0.9, stall_window: 30, tol: 1e-13, max_restarts: 8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DualStatus {
    /// A zero supergradient was found, so the incumbent is optimal.
    Optimal,
    /// Restarts stopped producing progress.
    Stalled,
    IterationLimit,
}

#[derive(Clone, Copy, Debug)]
pub struct IterationRecord {
    pub iter: usize,
    pub value: f64,
    pub grad_inf: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct DualRun {
    pub state: DualState,
    pub status: DualStatus,
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
    pub log: Vec<IterationRecord>,
}

const MAX_BISECTIONS: usize = 20;
const MAX_BACKTRACKS: usize = 60;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Limited-memory inverse Hessian for the minimization of `−Φ`.
struct Memory {
    cap: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl Memory {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > 1e-16 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt()) || sy <= 0.0 {
            return;
        }
        if self.pairs.len() == self.cap {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion: returns `−H·grad`.
    fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let mut alpha = vec![0.0; self.pairs.len()];
        for (a, (s, y, rho)) in alpha.iter_mut().zip(&self.pairs).rev() {
            *a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qv, yv)| *qv -= *a * yv);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for (a, (s, y, rho)) in alpha.iter().zip(&self.pairs) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qv, sv)| *qv += (a - b) * sv);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

struct Searcher<'a> {
    problem: &'a DualProblem,
    evaluations: usize,
}

impl Searcher<'_> {
    fn eval(&mut self, x: &[f64]) -> Result<DualState> {
        self.evaluations += 1;
        eval_phi(self.problem, &DualPotentials::from_free(self.problem, x.to_vec())?)
    }

    /// Weak Wolfe search on `f = −Φ` along `d` with predicted slope
    /// `slope < 0`. Falls back to Armijo backtracking once the bracket has been
    /// bisected [`MAX_BISECTIONS`] times. `None` means no decrease was found.
    fn search(
        &mut self,
        x: &[f64],
        cur: &DualState,
        d: &[f64],
        slope: f64,
        opts: &MaximizeOptions,
    ) -> Result<Option<(DualState, f64)>> {
        let f0 = -cur.value;
        let trial = |t: f64| -> Vec<f64> { x.iter().zip(d).map(|(a, b)| a + t * b).collect() };
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut t = 1.0;
        let mut bisections = 0;
        let mut armijo_ok: Option<(DualState, f64)> = None;
        for _ in 0..200 {
            let st = self.eval(&trial(t))?;
            let f = -st.value;
            if f > f0 + opts.c1 * t * slope {
                hi = t;
            } else {
                let dslope = -dot(&st.supergrad, d);
                if dslope < opts.c2 * slope {
                    lo = t;
                    armijo_ok = Some((st, t));
                } else {
                    return Ok(Some((st, t)));
                }
            }
            if hi.is_finite() {
                bisections += 1;
                if bisections > MAX_BISECTIONS {
                    break;
                }
                t = 0.5 * (lo + hi);
            } else {
                t *= 2.0;
                if t > 1e20 {
                    break;
                }
            }
        }
        if let Some(found) = armijo_ok {
            return Ok(Some(found));
        }
        let mut t = if hi.is_finite() { hi } else { 1.0 };
        for _ in 0..MAX_BACKTRACKS {
            t *= 0.5;
            let st = self.eval(&trial(t))?;
            if -st.value <= f0 + opts.c1 * t * slope && st.value > cur.value {
                return Ok(Some((st, t)));
            }
        }
        Ok(None)
    }
}

/// Affine potentials `φ_i(z) = 2a_i (m̄ − m_i)·z` that are optimal when every
/// population is a translate of the others; `m̄` is the `a`-weighted mean of
/// the population means. They satisfy `Σ_i φ_i = 0` exactly.
pub fn mean_shift_start(problem: &DualProblem) -> DualPotentials {
    let d = problem.z.dim();
    let total: f64 = problem.coef.iter().sum();
    let means: Vec<Vec<f64>> = problem.measures.iter().map(DiscreteMeasure::mean).collect();
    let bar: Vec<f64> =
        (0..d).map(|a| means.iter().zip(&problem.coef).map(|(m, c)| c * m[a]).sum::<f64>() / total).collect();
    let n_z = problem.n_z();
    let mut free = vec![0.0; problem.n_free()];
    for i in 0..problem.n_populations() - 1 {
        let shift: Vec<f64> = (0..d).map(|a| 2.0 * problem.coef[i] * (bar[a] - means[i][a])).collect();
        for (k, z) in problem.z.iter().enumerate() {
            free[i * n_z + k] = shift.iter().zip(z).map(|(s, c)| s * c).sum();
        }
    }
    DualPotentials { n_pop: problem.n_populations(), n_z, free }
}

/// L-BFGS ascent from `φ = 0`. The memory is flushed whenever the value
/// stalls for `stall_window` iterations or a search fails; the run stops after
/// `max_restarts` flushes in a row that bring no progress.
pub fn maximize(problem: &DualProblem, opts: &MaximizeOptions) -> Result<DualRun> {
    maximize_from(problem, DualPotentials::zeros(problem), opts)
}

pub fn maximize_from(problem: &DualProblem, start: DualPotentials, opts: &MaximizeOptions) -> Result<DualRun> {
    let mut searcher = Searcher { problem, evaluations: 0 };
    let mut x = start.free().to_vec();
    let mut cur = searcher.eval(&x)?;
    let mut log = vec![IterationRecord { iter: 0, value: cur.value, grad_inf: inf_norm(&cur.supergrad), step: 0.0 }];
    if problem.n_free() == 0 {
        return Ok(DualRun { state: cur, status: DualStatus::Optimal, iterations: 0, evaluations: 1, restarts: 0, log });
    }
    let mut memory = Memory { cap: opts.memory.max(1), pairs: VecDeque::new() };
    let mut restarts = 0;
    let mut idle_restarts = 0;
    let mut value_at_restart = cur.value;
    let mut window_start = cur.value;
    let mut since_window = 0;
    let mut status = DualStatus::IterationLimit;
    let mut iter = 0;
    while iter < opts.max_iters {
        if cur.supergrad.iter().all(|&g| g == 0.0) {
            status = DualStatus::Optimal;
            break;
        }
        iter += 1;
        let grad: Vec<f64> = cur.supergrad.iter().map(|g| -g).collect();
        let mut d = memory.direction(&grad);
        if !(dot(&grad, &d) < 0.0) {
            memory.pairs.clear();
            d = cur.supergrad.clone();
        }
        let steepest = memory.pairs.is_empty();
        let mut found = searcher.search(&x, &cur, &d, -dot(&cur.supergrad, &d), opts)?;
        if found.is_none() && steepest {
            match escape_kink(problem, &mut searcher, &x, &cur, opts)? {
                Escape::Optimal => {
                    status = DualStatus::Optimal;
                    break;
                }
                Escape::Step(dir, next, t) => {
                    d = dir;
                    found = Some((next, t));
                }
                Escape::Failed => {}
            }
        }
        let step = match found {
            Some((next, t)) => {
                let s: Vec<f64> = d.iter().map(|v| t * v).collect();
                let y: Vec<f64> = next.supergrad.iter().zip(&cur.supergrad).map(|(a, b)| b - a).collect();
                x.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
                memory.push(s, y);
                cur = next;
                t
            }
            None => 0.0,
        };
        log::debug!("dual iter {iter}: value {:.15e} step {step:.3e} memory {}", cur.value, memory.pairs.len());
        log.push(IterationRecord { iter, value: cur.value, grad_inf: inf_norm(&cur.supergrad), step });
        since_window += 1;
        let stalled = step == 0.0
            || (since_window >= opts.stall_window
                && (cur.value - window_start).abs() <= opts.tol * cur.value.abs().max(1e-300));
        if since_window >= opts.stall_window {
            window_start = cur.value;
            since_window = 0;
        }
        if stalled {
            if step == 0.0 && memory.pairs.is_empty() {
                status = DualStatus::Stalled;
                break;
            }
            restarts += 1;
            if cur.value - value_at_restart <= opts.tol * cur.value.abs().max(1e-300) {
                idle_restarts += 1;
            } else {
                idle_restarts = 0;
            }
            value_at_restart = cur.value;
            memory.pairs.clear();
            window_start = cur.value;
            since_window = 0;
            if idle_restarts >= opts.max_restarts {
                status = DualStatus::Stalled;
                break;
            }
        }
    }
    log::info!(
        "dual ascent: {:?} after {iter} iterations, {} evaluations, {restarts} restarts, value {:.12e}",
        status,
        searcher.evaluations,
        cur.value
    );
    Ok(DualRun { state: cur, status, iterations: iter, evaluations: searcher.evaluations, restarts, log })
}

/// Active-set tolerances, relative to `max(1, |Φ|)`, tried at a kink.
const KINK_EPSILONS: [f64; 4] = [1e-13, 1e-10, 1e-7, 1e-4];
/// Min-norm supergradients below this (max norm) count as zero.
const ZERO_SUPERGRAD: f64 = 1e-12;

enum Escape {
    Optimal,
    Step(Vec<f64>, DualState, f64),
    Failed,
}

/// Called when the extremal supergradient is not an ascent direction. The
/// superdifferential near `φ` is spanned by the plans on the ε-active set;
/// its smallest element is an ascent direction, or certifies optimality
/// when it vanishes for the tightest ε.
fn escape_kink(
    problem: &DualProblem,
    searcher: &mut Searcher<'_>,
    x: &[f64],
    cur: &DualState,
    opts: &MaximizeOptions,
) -> Result<Escape> {
    let scale = cur.value.abs().max(1.0);
    let fit_opts = RecoverOptions { max_iters: 2000, tol: 1e-32 };
    for (n, eps) in KINK_EPSILONS.iter().enumerate() {
        let active = active_set(problem, cur, eps * scale)?;
        let v = min_norm_supergradient(problem, cur, &active, &fit_opts)?;
        if inf_norm(&v) <= ZERO_SUPERGRAD {
            if n == 0 {
                return Ok(Escape::Optimal);
            }
            continue;
        }
        if let Some((next, t)) = searcher.search(x, cur, &v, -dot(&v, &v), opts)? {
            log::debug!("left a kink with epsilon {:.0e}", eps * scale);
            return Ok(Escape::Step(v, next, t));
        }
    }
    Ok(Escape::Failed)
}

/// Largest `|φ_i^{c_i}(y_i^j) + φ_i^k − c_i(y_i^j, z_k)|` over the listed
/// `(j, k)` pairs of each population.
pub fn slackness_report(problem: &DualProblem, state: &DualState, active: &[Vec<(usize, usize)>]) -> Vec<f64> {
    active
        .iter()
        .enumerate()
        .map(|(i, pairs)| {
            let phi = state.potentials.row(i);
            pairs
                .iter()
                .map(|&(j, k)| (state.transforms[i][j] + phi[k] - problem.cost(i, j, k)).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}
