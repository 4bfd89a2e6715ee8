//! Barycenter recovery from dual potentials.
//!
//! Mass may move from `y_i^j` to `z_k` only where `G_{i,j}(k) = a_i|y_i^j − z_k|² − φ_i^k`
//! is within `ε` of its minimum. On that active set the fractions `f_i^{j,k}`
//! are fitted so that every population pushes forward to the same measure:
//!
//! `min Σ_{l<m} Σ_k (Σ_j w_l^j f_l^{j,k} − Σ_j w_m^j f_m^{j,k})²`, `f_i^{j,·}` in the simplex.

use crate::barycenter::BarycenterResult;
use crate::dual::{DualProblem, DualState};
use crate::kdtree::LiftedIndex;
use crate::measure::{DiscreteMeasure, TransportPlan, PLAN_EPS};
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-5;
const POWER_ITERS: usize = 20;

/// Active grid indices for every atom, `ks[i][j]`, sorted.
#[derive(Clone, Debug)]
pub struct ActiveSet {
    pub epsilon: f64,
    pub ks: Vec<Vec<Vec<usize>>>,
}

impl ActiveSet {
    pub fn len(&self) -> usize {
        self.ks.iter().flatten().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(j, k)` pairs of population `i`.
    pub fn pairs(&self, i: usize) -> Vec<(usize, usize)> {
        self.ks[i].iter().enumerate().flat_map(|(j, ks)| ks.iter().map(move |&k| (j, k))).collect()
    }
}

/// Triples with `G_{i,j}(k) ≤ min_k' G_{i,j}(k') + ε`. Candidates come from a
/// ball query in the lifted space and are then filtered with the direct formula.
pub fn active_set(problem: &DualProblem, state: &DualState, epsilon: f64) -> Result<ActiveSet> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    let mut ks = Vec::with_capacity(problem.n_populations());
    for (i, mu) in problem.measures().iter().enumerate() {
        let phi = state.potentials.row(i);
        let index = LiftedIndex::new(problem.z(), problem.coefficient(i), &phi)?;
        let scale = problem.coefficient(i).sqrt();
        let mut lifted = Vec::with_capacity(mu.dim() + 1);
        let mut per_atom = Vec::with_capacity(mu.len());
        for j in 0..mu.len() {
            let best = state.transforms[i][j];
            lifted.clear();
            lifted.extend(mu.point(j).iter().map(|c| scale * c));
            lifted.push(0.0);
            // lifted distance is G + offset; pad the radius against rounding
            let r2 = best + index.offset() + epsilon;
            let r2 = r2 + 1e-12 * r2.abs().max(1.0);
            let mut cand: Vec<usize> = index
                .tree()
                .within(&lifted, r2)
                .into_iter()
                .filter(|&k| problem.cost(i, j, k) - phi[k] <= best + epsilon)
                .collect();
            let k_star = state.assignments[i][j];
            if !cand.contains(&k_star) {
                cand.push(k_star);
                cand.sort_unstable();
            }
            per_atom.push(cand);
        }
        ks.push(per_atom);
    }
    Ok(ActiveSet { epsilon, ks })
}

/// Fractions `f_i^{j,k}` on the active set.
#[derive(Clone, Debug)]
pub struct TransportFractions {
    pub values: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug)]
pub struct RecoverOptions {
    pub max_iters: usize,
    /// Stop once an iteration lowers the objective by less than this.
    pub tol: f64,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        Self { max_iters: 20_000, tol: 1e-30 }
    }
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub fractions: TransportFractions,
    pub result: BarycenterResult,
    /// Largest `|ν_l^k − ν_m^k|` over pairs of populations and grid points.
    pub residual: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted iteration.
    pub history: Vec<f64>,
}

/// Which differences of the images are penalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pairing {
    /// Every pair `l < m`.
    All,
    /// Every population against the last one.
    Last,
}

/// Flat layout: block `b` covers `ks[start[b]..start[b + 1]]` and belongs to
/// population `pop[b]` with weight `w[b]`.
struct Layout {
    start: Vec<usize>,
    pop: Vec<usize>,
    w: Vec<f64>,
    k: Vec<usize>,
    n_pop: usize,
    n_z: usize,
    pairing: Pairing,
}

impl Layout {
    fn new(problem: &DualProblem, active: &ActiveSet, pairing: Pairing) -> Result<Self> {
        let n_pop = problem.n_populations();
        if active.ks.len() != n_pop {
            return Err(Error::InvalidInput("active set does not match the problem".into()));
        }
        let mut layout =
            Layout { start: vec![0], pop: Vec::new(), w: Vec::new(), k: Vec::new(), n_pop, n_z: problem.n_z(), pairing };
        for (i, mu) in problem.measures().iter().enumerate() {
            if active.ks[i].len() != mu.len() {
                return Err(Error::InvalidInput(format!("active set of population {i} has the wrong length")));
            }
            for (j, ks) in active.ks[i].iter().enumerate() {
                if ks.is_empty() {
                    return Err(Error::InvalidInput(format!("atom ({i}, {j}) has no active grid point")));
                }
                layout.k.extend_from_slice(ks);
                layout.start.push(layout.k.len());
                layout.pop.push(i);
                layout.w.push(mu.weights()[j]);
            }
        }
        Ok(layout)
    }

    fn blocks(&self) -> usize {
        self.pop.len()
    }

    fn block(&self, b: usize) -> std::ops::Range<usize> {
        self.start[b]..self.start[b + 1]
    }

    fn images(&self, f: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for b in 0..self.blocks() {
            let row = self.pop[b] * self.n_z;
            for s in self.block(b) {
                out[row + self.k[s]] += self.w[b] * f[s];
            }
        }
    }

    /// Objective value for the images `nu`.
    fn objective(&self, nu: &[f64]) -> f64 {
        let n = self.n_pop as f64;
        let last = (self.n_pop - 1) * self.n_z;
        (0..self.n_z)
            .map(|k| match self.pairing {
                Pairing::All => {
                    let (mut sum, mut sq) = (0.0, 0.0);
                    for i in 0..self.n_pop {
                        let v = nu[i * self.n_z + k];
                        sum += v;
                        sq += v * v;
                    }
                    (n * sq - sum * sum).max(0.0)
                }
                Pairing::Last => (0..self.n_pop - 1).map(|i| (nu[i * self.n_z + k] - nu[last + k]).powi(2)).sum(),
            })
            .sum()
    }

    fn gradient(&self, nu: &[f64], grad: &mut [f64]) {
        let n = self.n_pop as f64;
        let mut total = vec![0.0; self.n_z];
        for i in 0..self.n_pop {
            for k in 0..self.n_z {
                total[k] += nu[i * self.n_z + k];
            }
        }
        let last = self.n_pop - 1;
        for b in 0..self.blocks() {
            let i = self.pop[b];
            let row = i * self.n_z;
            for s in self.block(b) {
                let k = self.k[s];
                let d = match self.pairing {
                    Pairing::All => n * nu[row + k] - total[k],
                    Pairing::Last if i < last => nu[row + k] - nu[last * self.n_z + k],
                    Pairing::Last => (n - 1.0) * nu[row + k] - (total[k] - nu[row + k]),
                };
                grad[s] = 2.0 * self.w[b] * d;
            }
        }
    }
}

struct Fit {
    f: Vec<f64>,
    nu: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

/// Projected gradient with per-atom simplex projections from `f`. The step
/// starts at `1/L` for a power-iteration estimate of `L` and is halved until
/// the quadratic upper bound holds, so the objective never increases.
fn fit(layout: &Layout, mut f: Vec<f64>, opts: &RecoverOptions) -> Fit {
    let n_var = layout.k.len();
    let lipschitz = estimate_lipschitz(layout, n_var);
    let mut nu = vec![0.0; layout.n_pop * layout.n_z];
    let mut grad = vec![0.0; n_var];
    let mut trial = vec![0.0; n_var];
    let mut nu_trial = vec![0.0; nu.len()];
    layout.images(&f, &mut nu);
    let mut obj = layout.objective(&nu);
    let mut history = vec![obj];
    let mut step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        if obj <= opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        layout.gradient(&nu, &mut grad);
        // retry from the nominal step so one bad halving does not stick
        let mut t = (2.0 * step).min(if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 });
        let accepted = loop {
            for b in 0..layout.blocks() {
                let r = layout.block(b);
                for v in r.clone() {
                    trial[v] = f[v] - t * grad[v];
                }
                project_simplex(&mut trial[r]);
            }
            layout.images(&trial, &mut nu_trial);
            let new_obj = layout.objective(&nu_trial);
            let (mut lin, mut sq) = (0.0, 0.0);
            for v in 0..n_var {
                let d = trial[v] - f[v];
                lin += grad[v] * d;
                sq += d * d;
            }
            if sq == 0.0 {
                break None;
            }
            if new_obj <= obj + lin + sq / (2.0 * t) && new_obj <= obj {
                break Some(new_obj);
            }
            t *= 0.5;
            if t < 1e-20 * step {
                break None;
            }
        };
        let Some(new_obj) = accepted else {
            converged = true;
            break;
        };
        let gain = obj - new_obj;
        std::mem::swap(&mut f, &mut trial);
        std::mem::swap(&mut nu, &mut nu_trial);
        obj = new_obj;
        history.push(obj);
        step = t;
        if gain <= opts.tol {
            converged = true;
            break;
        }
    }
    Fit { f, nu, objective: obj, iterations, converged, history }
}

/// Smallest supergradient, in the free coordinates, among those generated by
/// plans on the active set. Starts from the assignment in `state`.
pub fn min_norm_supergradient(
    problem: &DualProblem,
    state: &DualState,
    active: &ActiveSet,
    opts: &RecoverOptions,
) -> Result<Vec<f64>> {
    let layout = Layout::new(problem, active, Pairing::Last)?;
    let mut f = vec![0.0; layout.k.len()];
    let mut b = 0;
    for assign in &state.assignments {
        for &k_star in assign {
            let r = layout.block(b);
            let at = layout.k[r.clone()].iter().position(|&k| k == k_star).unwrap_or(0);
            f[r.start + at] = 1.0;
            b += 1;
        }
    }
    let out = fit(&layout, f, opts);
    let n_z = problem.n_z();
    let last = (problem.n_populations() - 1) * n_z;
    Ok((0..last).map(|v| out.nu[last + v % n_z] - out.nu[v]).collect())
}

/// Euclidean projection onto the probability simplex, in place.
pub fn project_simplex(v: &mut [f64]) {
    if v.len() == 1 {
        v[0] = 1.0;
        return;
    }
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (r, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (r + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

/// Fits the fractions by projected gradient from uniform fractions; the
/// objective never increases along the run.
pub fn recover(problem: &DualProblem, active: &ActiveSet, opts: &RecoverOptions) -> Result<Reconstruction> {
    let n_pop = problem.n_populations();
    let n_z = problem.n_z();
    let layout = Layout::new(problem, active, Pairing::All)?;
    let mut f = vec![0.0; layout.k.len()];
    for b in 0..layout.blocks() {
        let r = layout.block(b);
        let share = 1.0 / r.len() as f64;
        f[r].iter_mut().for_each(|x| *x = share);
    }
    let Fit { f, nu, objective: obj, iterations, converged, history } = fit(&layout, f, opts);
    log::info!(
        "recovery: {} active triples, {iterations} iterations, objective {obj:.3e}, converged {converged}",
        layout.k.len()
    );

    let mut residual = 0.0f64;
    for k in 0..n_z {
        let col = (0..n_pop).map(|i| nu[i * n_z + k]);
        let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        residual = residual.max(hi - lo);
    }

    let mut values = Vec::with_capacity(n_pop);
    let mut plans = Vec::with_capacity(n_pop);
    let mut population_costs = Vec::with_capacity(n_pop);
    let mut b = 0;
    for (i, mu) in problem.measures().iter().enumerate() {
        let mut per_atom = Vec::with_capacity(mu.len());
        let mut entries = Vec::new();
        let mut cost = 0.0;
        for j in 0..mu.len() {
            let r = layout.block(b);
            per_atom.push(f[r.clone()].to_vec());
            for v in r {
                let mass = layout.w[b] * f[v];
                cost += mass * problem.cost(i, j, layout.k[v]);
                entries.push((j, layout.k[v], mass));
            }
            b += 1;
        }
        values.push(per_atom);
        plans.push(TransportPlan::new(mu.len(), n_z, entries, PLAN_EPS));
        population_costs.push(cost);
    }
    let avg: Vec<f64> = (0..n_z).map(|k| (0..n_pop).map(|i| nu[i * n_z + k]).sum::<f64>() / n_pop as f64).collect();
    let nu_measure = DiscreteMeasure::new(problem.z().clone(), avg)?.normalize()?;
    let value = population_costs.iter().sum();
    Ok(Reconstruction {
        fractions: TransportFractions { values },
        result: BarycenterResult { nu: nu_measure, plans, value, population_costs, iterations },
        residual,
        objective: obj,
        iterations,
        converged,
        history,
    })
}

/// Largest eigenvalue of the objective's Hessian by power iteration, padded
/// slightly; backtracking corrects any underestimate.
fn estimate_lipschitz(layout: &Layout, n_var: usize) -> f64 {
    let mut v: Vec<f64> = (0..n_var).map(|s| 1.0 + (s % 7) as f64 * 0.1).collect();
    let mut nu = vec![0.0; layout.n_pop * layout.n_z];
    let mut hv = vec![0.0; n_var];
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERS {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        layout.images(&v, &mut nu);
        // the objective is a homogeneous quadratic, so its gradient is H·v
        layout.gradient(&nu, &mut hv);
        lambda = v.iter().zip(&hv).map(|(a, b)| a * b).sum::<f64>();
        std::mem::swap(&mut v, &mut hv);
    }
    1.01 * lambda.max(0.0)
}
