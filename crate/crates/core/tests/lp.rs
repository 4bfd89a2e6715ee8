use baryline::lp::{solve, LpProblem, LpStatus, SolveOptions};
use baryline::measure::ot_cost;
use baryline::{CostSpec, DiscreteMeasure, PointSet};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Best basic feasible solution by trying every column subset.
fn vertex_enumeration(a: &DMatrix<f64>, b: &DVector<f64>, c: &[f64]) -> Option<f64> {
    let (m, n) = a.shape();
    let mut best: Option<f64> = None;
    let mut subset: Vec<usize> = (0..m).collect();
    loop {
        let basis = DMatrix::from_fn(m, m, |r, s| a[(r, subset[s])]);
        if basis.determinant().abs() > 1e-9 {
            if let Some(x) = basis.lu().solve(b) {
                if x.iter().all(|&v| v >= -1e-10) {
                    let val: f64 = subset.iter().zip(x.iter()).map(|(&j, v)| c[j] * v).sum();
                    best = Some(best.map_or(val, |b: f64| b.min(val)));
                }
            }
        }
        // next m-subset of 0..n in lexicographic order
        let mut i = m;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] < n - m + i {
                subset[i] += 1;
                for t in i + 1..m {
                    subset[t] = subset[t - 1] + 1;
                }
                break;
            }
        }
    }
}

fn small_lp() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..=3, 3usize..=6).prop_flat_map(|(m, n)| {
        (
            Just(m),
            Just(n),
            prop::collection::vec(-3i32..=3, m * n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            prop::collection::vec(0.0f64..2.0, n),
            prop::collection::vec(0.0f64..5.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn simplex_matches_vertex_enumeration((m, n, entries, x0, c) in small_lp()) {
        let a = DMatrix::from_row_slice(m, n, &entries);
        prop_assume!(a.rank(1e-9) == m);
        let b = &a * DVector::from_column_slice(&x0);
        let mut lp = LpProblem::new(n);
        for (j, &cj) in c.iter().enumerate() {
            lp.set_cost(j, cj);
        }
        for r in 0..m {
            lp.add_row((0..n).map(|j| (j, a[(r, j)])).collect(), b[r]);
        }
        let sol = solve(&lp, &SolveOptions::default()).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        let want = vertex_enumeration(&a, &b, &c).unwrap();
        prop_assert!((sol.value - want).abs() <= 1e-8 * (1.0 + want.abs()), "{} vs {}", sol.value, want);

        // certificate: primal feasibility, dual feasibility, zero gap
        let bscale = 1.0 + b.amax();
        prop_assert!(lp.residual(&sol.x) <= 1e-9 * bscale);
        prop_assert!(sol.x.iter().all(|&v| v >= -1e-12));
        let d = lp.reduced_costs(&sol.duals);
        prop_assert!(d.iter().all(|&v| v >= -1e-8));
        let comp = d.iter().zip(&sol.x).map(|(d, x)| (d * x).abs()).fold(0.0, f64::max);
        prop_assert!(comp <= 1e-8);
        let dual_value: f64 = sol.duals.iter().zip(b.iter()).map(|(y, b)| y * b).sum();
        prop_assert!((dual_value - sol.value).abs() <= 1e-8 * (1.0 + sol.value.abs()));
    }

    #[test]
    fn uniform_transport_is_a_best_permutation(pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 4..=12)) {
        let n = pts.len() / 2;
        let xs: Vec<[f64; 2]> = pts[..n].iter().map(|p| [p.0, p.1]).collect();
        let ys: Vec<[f64; 2]> = pts[n..2 * n].iter().map(|p| [p.0, p.1]).collect();
        let mu = DiscreteMeasure::uniform(PointSet::from_points(&xs).unwrap()).unwrap();
        let nu = DiscreteMeasure::uniform(PointSet::from_points(&ys).unwrap()).unwrap();
        let cost = CostSpec::power(2.0, 1.0);
        let (v, plan) = ot_cost(&mu, &nu, &cost).unwrap();
        let mat = cost.matrix(mu.points(), nu.points()).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permutations(&mut perm, 0, &mut |p| {
            let s: f64 = p.iter().enumerate().map(|(i, &j)| mat[i * n + j]).sum::<f64>() / n as f64;
            best = best.min(s);
        });
        prop_assert!((v - best).abs() <= 1e-10);
        for (r, s) in plan.row_sums().iter().zip(plan.col_sums()) {
            prop_assert!((r - 1.0 / n as f64).abs() <= 1e-9 && (s - 1.0 / n as f64).abs() <= 1e-9);
        }
    }
}

fn permutations(p: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permutations(p, k + 1, visit);
        p.swap(k, i);
    }
}

#[test]
fn two_atom_transport_polytope_vertices() {
    let line = |xs: &[f64]| DiscreteMeasure::uniform(PointSet::new(1, xs.to_vec()).unwrap()).unwrap();
    let c = CostSpec::power(1.0, 1.0);
    let (same, _) = ot_cost(&line(&[0.0, 1.0]), &line(&[0.0, 1.0]), &c).unwrap();
    assert!(same.abs() < 1e-12);
    // the polytope has two vertices, with costs 1 and 1
    let (shifted, _) = ot_cost(&line(&[0.0, 1.0]), &line(&[1.0, 2.0]), &c).unwrap();
    assert!((shifted - 1.0).abs() < 1e-12);
}

#[test]
fn degenerate_transport_terminates() {
    // many equal costs and integral marginals drive long degenerate runs
    let n = 30;
    let pts: Vec<[f64; 1]> = (0..n).map(|i| [(i % 3) as f64]).collect();
    let m = DiscreteMeasure::uniform(PointSet::from_points(&pts).unwrap()).unwrap();
    let (v, _) = ot_cost(&m, &m, &CostSpec::power(2.0, 1.0)).unwrap();
    assert!(v.abs() < 1e-12);
}
