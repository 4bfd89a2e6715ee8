use super::lu::BasisFactor;
use super::{LpProblem, LpSolution, LpStatus, SolveOptions};

/// Pivot entries below this are never chosen.
const PIVOT_TOL: f64 = 1e-9;
/// Eta columns kept before a fresh factorization.
const REFACTOR_INTERVAL: usize = 100;
const MAX_RESTARTS: usize = 5;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Phase {
    One,
    Two,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
    IterationLimit,
    /// A singular basis was repaired with artificials; feasibility must be
    /// re-established.
    Restart,
}

pub(super) struct Simplex<'a> {
    problem: &'a LpProblem,
    m: usize,
    n: usize,
    /// Sign-normalized columns, structural then one artificial per row.
    col_start: Vec<usize>,
    col_entries: Vec<(usize, f64)>,
    b: Vec<f64>,
    sign: Vec<f64>,
    /// Columns excluded from pricing (empty columns).
    frozen: Vec<bool>,
    head: Vec<usize>,
    position: Vec<usize>,
    x_b: Vec<f64>,
    factor: BasisFactor,
    tol: f64,
    /// Reduced costs below `-price_tol` are candidates to enter.
    price_tol: f64,
    max_iters: usize,
    iters: usize,
    chunk: usize,
    cursor: usize,
    y: Vec<f64>,
    w: Vec<f64>,
    work: Vec<f64>,
}

impl<'a> Simplex<'a> {
    pub fn new(problem: &'a LpProblem, opts: &SolveOptions) -> Self {
        let m = problem.n_rows();
        let n = problem.n_vars();
        let sign: Vec<f64> = problem.rhs().iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
        let b: Vec<f64> = problem.rhs().iter().zip(&sign).map(|(b, s)| b * s).collect();

        let mut counts = vec![0usize; n];
        for r in 0..m {
            for &(j, _) in problem.row(r) {
                counts[j] += 1;
            }
        }
        let mut col_start = Vec::with_capacity(n + m + 1);
        col_start.push(0);
        for j in 0..n {
            col_start.push(col_start[j] + counts[j]);
        }
        for r in 0..m {
            col_start.push(col_start[n + r] + 1);
        }
        let mut col_entries = vec![(0usize, 0.0f64); col_start[n + m]];
        let mut fill: Vec<usize> = col_start[..n].to_vec();
        for r in 0..m {
            for &(j, v) in problem.row(r) {
                col_entries[fill[j]] = (r, v * sign[r]);
                fill[j] += 1;
            }
        }
        for r in 0..m {
            col_entries[col_start[n + r]] = (r, 1.0);
        }
        let frozen = counts.iter().map(|&c| c == 0).collect();

        let head: Vec<usize> = (n..n + m).collect();
        let mut position = vec![usize::MAX; n + m];
        for (p, &v) in head.iter().enumerate() {
            position[v] = p;
        }
        let identity: Vec<Vec<(usize, f64)>> = (0..m).map(|r| vec![(r, 1.0)]).collect();
        let factor = BasisFactor::factorize(m, |p| &identity[p]).expect("identity basis");

        Self {
            problem,
            m,
            n,
            col_start,
            col_entries,
            x_b: b.clone(),
            b,
            sign,
            frozen,
            head,
            position,
            factor,
            tol: opts.tol,
            price_tol: opts.tol,
            max_iters: opts.max_iters.unwrap_or(50 * (m + n)),
            iters: 0,
            chunk: (n / 8).clamp(1024, 65536),
            cursor: 0,
            y: vec![0.0; m],
            w: vec![0.0; m],
            work: vec![0.0; m],
        }
    }

    #[inline]
    fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.col_entries[self.col_start[j]..self.col_start[j + 1]]
    }

    #[inline]
    fn cost(&self, j: usize, phase: Phase) -> f64 {
        match phase {
            Phase::One => {
                if j >= self.n {
                    1.0
                } else {
                    0.0
                }
            }
            Phase::Two => {
                if j >= self.n {
                    0.0
                } else {
                    self.problem.objective()[j]
                }
            }
        }
    }

    /// Largest artificial value in the basis.
    fn infeasibility(&self) -> f64 {
        (0..self.m).filter(|&p| self.head[p] >= self.n).map(|p| self.x_b[p]).fold(0.0, f64::max)
    }

    fn b_scale(&self) -> f64 {
        1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn run(mut self) -> LpSolution {
        let mut restarts = 0;
        let status = loop {
            if self.m == 0 {
                break LpStatus::Optimal;
            }
            match self.phase(Phase::One) {
                PhaseEnd::IterationLimit => break LpStatus::IterationLimit,
                PhaseEnd::Restart if restarts < MAX_RESTARTS => {
                    restarts += 1;
                    continue;
                }
                PhaseEnd::Restart => break LpStatus::IterationLimit,
                PhaseEnd::Optimal | PhaseEnd::Unbounded => {}
            }
            // phase one prices to a tolerance, which can leave a residue of
            // order `tol`; tighten pricing once before declaring infeasibility
            if !self.refactor() {
                if restarts == MAX_RESTARTS {
                    break LpStatus::IterationLimit;
                }
                restarts += 1;
                continue;
            }
            let infeasibility = self.infeasibility();
            if infeasibility > self.tol * self.b_scale() {
                if self.price_tol > self.tol * 1e-3 {
                    log::debug!("simplex: phase one residue {infeasibility:e}, tightening pricing");
                    self.price_tol = self.tol * 1e-3;
                    continue;
                }
                break LpStatus::Infeasible;
            }
            self.price_tol = self.tol;
            for p in 0..self.m {
                if self.head[p] >= self.n {
                    self.x_b[p] = 0.0;
                }
            }
            match self.phase(Phase::Two) {
                PhaseEnd::Optimal => {
                    let open_ray = (0..self.n).any(|j| self.frozen[j] && self.problem.objective()[j] < 0.0);
                    break if open_ray { LpStatus::Unbounded } else { LpStatus::Optimal };
                }
                PhaseEnd::Unbounded => break LpStatus::Unbounded,
                PhaseEnd::IterationLimit => break LpStatus::IterationLimit,
                PhaseEnd::Restart if restarts < MAX_RESTARTS => restarts += 1,
                PhaseEnd::Restart => break LpStatus::IterationLimit,
            }
        };
        self.finish(status)
    }

    fn finish(mut self, status: LpStatus) -> LpSolution {
        if self.m > 0 {
            self.refactor();
        }
        let mut x = vec![0.0; self.n];
        for p in 0..self.m {
            let v = self.head[p];
            if v < self.n {
                x[v] = self.x_b[p].max(0.0);
            }
        }
        let mut y: Vec<f64> = (0..self.m).map(|p| self.cost(self.head[p], Phase::Two)).collect();
        if self.m > 0 {
            self.factor.btran(&mut y, &mut self.work);
        }
        let duals = y.iter().zip(&self.sign).map(|(y, s)| y * s).collect();
        let value = x.iter().zip(self.problem.objective()).map(|(x, c)| x * c).sum();
        LpSolution { status, x, value, duals, iterations: self.iters }
    }

    /// Fresh factorization and primal recomputation. Returns false when a
    /// singular basis had to be patched with artificial columns.
    fn refactor(&mut self) -> bool {
        let mut patched = false;
        let factor = match BasisFactor::factorize(self.m, |p| self.column(self.head[p])) {
            Ok(f) => f,
            Err(singular) => {
                patched = true;
                log::debug!("simplex: patching {} singular basis columns", singular.positions.len());
                for (&p, &r) in singular.positions.iter().zip(&singular.rows) {
                    let old = self.head[p];
                    self.position[old] = usize::MAX;
                    self.head[p] = self.n + r;
                    self.position[self.n + r] = p;
                }
                BasisFactor::factorize(self.m, |p| self.column(self.head[p]))
                    .unwrap_or_else(|_| panic!("patched basis is singular"))
            }
        };
        self.factor = factor;
        self.x_b.copy_from_slice(&self.b);
        self.factor.ftran(&mut self.x_b, &mut self.work);
        let worst = self.x_b.iter().fold(0.0f64, |a, &v| a.min(v));
        if worst < -1e-6 * self.b_scale() {
            log::warn!("simplex: basis infeasible by {worst:e} after refactor");
        }
        for v in &mut self.x_b {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        !patched
    }

    fn needs_refactor(&self) -> bool {
        self.factor.num_etas() >= REFACTOR_INTERVAL
            || self.factor.eta_nnz() > 2 * self.factor.factor_nnz() + 20 * self.m
    }

    fn phase(&mut self, phase: Phase) -> PhaseEnd {
        let bland_trigger = self.m.max(200);
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut rejected: Vec<usize> = Vec::new();
        loop {
            if self.iters >= self.max_iters {
                return PhaseEnd::IterationLimit;
            }
            if self.needs_refactor() && !self.refactor() {
                return PhaseEnd::Restart;
            }

            for p in 0..self.m {
                self.y[p] = self.cost(self.head[p], phase);
            }
            self.factor.btran(&mut self.y, &mut self.work);

            let entering = if bland { self.price_bland(phase, &rejected) } else { self.price_partial(phase, &rejected) };
            let Some((q, dq)) = entering else {
                return PhaseEnd::Optimal;
            };

            self.w.iter_mut().for_each(|v| *v = 0.0);
            for &(r, v) in &self.col_entries[self.col_start[q]..self.col_start[q + 1]] {
                self.w[r] = v;
            }
            self.factor.ftran(&mut self.w, &mut self.work);

            let Some((r, theta)) = self.ratio_test(phase, bland) else {
                if phase == Phase::Two {
                    return PhaseEnd::Unbounded;
                }
                // cannot happen in exact arithmetic; skip the column
                rejected.push(q);
                continue;
            };
            rejected.clear();

            for p in 0..self.m {
                let wp = self.w[p];
                if wp != 0.0 {
                    let v = self.x_b[p] - theta * wp;
                    self.x_b[p] = if v < 0.0 { 0.0 } else { v };
                }
            }
            self.x_b[r] = theta;
            let leaving = self.head[r];
            self.position[leaving] = usize::MAX;
            self.head[r] = q;
            self.position[q] = r;
            self.factor.update(r, &self.w);
            self.iters += 1;

            if theta * dq.abs() <= 1e-14 {
                degenerate_run += 1;
                if degenerate_run > bland_trigger && !bland {
                    log::trace!("simplex: switching to Bland's rule at iteration {}", self.iters);
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
        }
    }

    #[inline]
    fn reduced_cost(&self, j: usize, phase: Phase) -> f64 {
        let mut d = self.cost(j, phase);
        for &(r, v) in self.column(j) {
            d -= self.y[r] * v;
        }
        d
    }

    #[inline]
    fn eligible(&self, j: usize) -> bool {
        self.position[j] == usize::MAX && !self.frozen[j]
    }

    fn price_partial(&mut self, phase: Phase, rejected: &[usize]) -> Option<(usize, f64)> {
        let n = self.n;
        if n == 0 {
            return None;
        }
        let mut start = self.cursor.min(n - 1);
        let mut scanned = 0;
        let mut best: Option<(usize, f64)> = None;
        while scanned < n {
            let end = (start + self.chunk).min(n);
            for j in start..end {
                if !self.eligible(j) {
                    continue;
                }
                let d = self.reduced_cost(j, phase);
                if d < -self.price_tol && best.is_none_or(|(_, bd)| d < bd) && !rejected.contains(&j) {
                    best = Some((j, d));
                }
            }
            scanned += end - start;
            start = if end == n { 0 } else { end };
            if best.is_some() {
                self.cursor = start;
                return best;
            }
        }
        None
    }

    fn price_bland(&self, phase: Phase, rejected: &[usize]) -> Option<(usize, f64)> {
        (0..self.n)
            .filter(|&j| self.eligible(j) && !rejected.contains(&j))
            .map(|j| (j, self.reduced_cost(j, phase)))
            .find(|&(_, d)| d < -self.price_tol)
    }

    /// Leaving position and step length for the entering direction `w`.
    fn ratio_test(&self, phase: Phase, bland: bool) -> Option<(usize, f64)> {
        let delta = self.tol * self.b_scale();
        // (position, |w|, current value) of every blocking basic variable
        let blocking = |p: usize| -> Option<f64> {
            let wp = self.w[p];
            if wp > PIVOT_TOL {
                Some(wp)
            } else if phase == Phase::Two && self.head[p] >= self.n && wp < -PIVOT_TOL {
                Some(-wp)
            } else {
                None
            }
        };
        let value = |p: usize| -> f64 {
            if self.w[p] < 0.0 {
                0.0
            } else {
                self.x_b[p].max(0.0)
            }
        };

        if bland {
            let mut best: Option<(usize, f64)> = None;
            for p in 0..self.m {
                if let Some(a) = blocking(p) {
                    let ratio = value(p) / a;
                    best = match best {
                        None => Some((p, ratio)),
                        Some((bp, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            if ratio < br && !tie || tie && self.head[p] < self.head[bp] {
                                Some((p, ratio))
                            } else {
                                Some((bp, br))
                            }
                        }
                    };
                }
            }
            return best;
        }

        let mut theta_max = f64::INFINITY;
        for p in 0..self.m {
            if let Some(a) = blocking(p) {
                theta_max = theta_max.min((value(p) + delta) / a);
            }
        }
        if !theta_max.is_finite() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        for p in 0..self.m {
            if let Some(a) = blocking(p) {
                if value(p) / a <= theta_max {
                    let better = match best {
                        None => true,
                        Some((bp, ba)) => a > ba || (a == ba && self.head[p] < self.head[bp]),
                    };
                    if better {
                        best = Some((p, a));
                    }
                }
            }
        }
        best.map(|(p, a)| (p, value(p) / a))
    }
}
