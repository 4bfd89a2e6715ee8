use super::{CostSpec, DiscreteMeasure, TransportPlan};
use crate::lp::{self, LpProblem, SolveOptions};
use crate::{Error, Result};

/// Plan entries below this mass are dropped.
pub(crate) const PLAN_EPS: f64 = 1e-14;

/// Exact optimal transport cost between two discrete measures, solved as a
/// transportation LP (one redundant marginal row dropped).
pub fn ot_cost(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &CostSpec) -> Result<(f64, TransportPlan)> {
    cost.validate()?;
    let matrix = cost.matrix(mu.points(), nu.points())?;
    ot_with_matrix(mu.weights(), nu.weights(), &matrix)
}

pub(crate) fn ot_with_matrix(a: &[f64], b: &[f64], matrix: &[f64]) -> Result<(f64, TransportPlan)> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(Error::EmptyMeasure);
    }
    let mut lp = LpProblem::new(n * m);
    for (v, &c) in matrix.iter().enumerate() {
        lp.set_cost(v, c);
    }
    for (j, &w) in a.iter().enumerate() {
        lp.add_row((0..m).map(|k| (j * m + k, 1.0)).collect(), w);
    }
    for (k, &w) in b.iter().enumerate().take(m - 1) {
        lp.add_row((0..n).map(|j| (j * m + k, 1.0)).collect(), w);
    }
    let sol = lp::solve(&lp, &SolveOptions::default())?.into_optimal()?;
    let entries = sol
        .x
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(v, &x)| (v / m, v % m, x))
        .collect();
    let plan = TransportPlan::new(n, m, entries, PLAN_EPS);
    Ok((sol.value, plan))
}

/// 1-Wasserstein distance for the Euclidean ground metric.
pub fn wasserstein1(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    Ok(ot_cost(mu, nu, &CostSpec::power(1.0, 1.0))?.0)
}

/// Upper bound `Σ_i Lip(c_i) · gap_i` on the change of the optimal value when
/// each `μ_i` moves by `gap_i` in 1-Wasserstein distance (costs unchanged).
pub fn stability_bound(costs: &[CostSpec], w1_gaps: &[f64]) -> Result<f64> {
    if costs.len() != w1_gaps.len() {
        return Err(Error::InvalidInput(format!("{} costs but {} gaps", costs.len(), w1_gaps.len())));
    }
    costs
        .iter()
        .zip(w1_gaps)
        .enumerate()
        .map(|(i, (c, &g))| c.lipschitz.map(|l| l * g).ok_or(Error::MissingLipschitz(i)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::PointSet;

    fn line_measure(xs: &[f64], ws: &[f64]) -> DiscreteMeasure {
        let pts = PointSet::new(1, xs.to_vec()).unwrap();
        DiscreteMeasure::new(pts, ws.to_vec()).unwrap()
    }

    #[test]
    fn diracs_quadratic() {
        let a = DiscreteMeasure::dirac(&[0.0, 1.0]).unwrap();
        let b = DiscreteMeasure::dirac(&[2.0, -1.0]).unwrap();
        let (v, plan) = ot_cost(&a, &b, &CostSpec::power(2.0, 1.0)).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
        assert_eq!(plan.entries(), &[(0, 0, 1.0)]);
    }

    #[test]
    fn identical_measures_cost_nothing() {
        let m = line_measure(&[0.0, 0.3, 1.0, 2.5], &[0.1, 0.4, 0.2, 0.3]);
        let (v, plan) = ot_cost(&m, &m, &CostSpec::power(1.0, 1.0)).unwrap();
        assert!(v.abs() < 1e-12);
        for (r, w) in plan.row_sums().iter().zip(m.weights()) {
            assert!((r - w).abs() < 1e-9);
        }
    }

    #[test]
    fn two_point_line_shift() {
        // the 2×2 transportation polytope has vertices diag and anti-diag;
        // for nu = mu: costs 0 and 1; for nu shifted by one: costs 1 and 1
        let mu = line_measure(&[0.0, 1.0], &[0.5, 0.5]);
        let shifted = line_measure(&[1.0, 2.0], &[0.5, 0.5]);
        let c = CostSpec::power(1.0, 1.0);
        assert!(ot_cost(&mu, &mu, &c).unwrap().0.abs() < 1e-12);
        assert!((ot_cost(&mu, &shifted, &c).unwrap().0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stability_bound_formula() {
        let costs = [CostSpec::power(1.0, 1.0).with_lipschitz(1.0), CostSpec::power(1.0, 1.0).with_lipschitz(1.0)];
        assert_eq!(stability_bound(&costs, &[0.0, 0.0]).unwrap(), 0.0);
        let costs = [CostSpec::power(1.0, 1.0).with_lipschitz(2.0), CostSpec::power(1.0, 1.0).with_lipschitz(3.0)];
        assert!((stability_bound(&costs, &[0.1, 0.2]).unwrap() - 0.8).abs() < 1e-15);
        let missing = [CostSpec::power(1.0, 1.0)];
        assert!(matches!(stability_bound(&missing, &[0.1]), Err(Error::MissingLipschitz(0))));
    }
}
