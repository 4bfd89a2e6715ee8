use baryline::barycenter::solve_barycenter;
use baryline::dual::{eval_phi, maximize, slackness_report, DualPotentials, DualProblem, MaximizeOptions};
use baryline::lp::SolveOptions;
use baryline::reconstruct::{active_set, min_norm_supergradient, project_simplex, recover, RecoverOptions};
use baryline::{DiscreteMeasure, Grid, PointSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_problem(rng: &mut ChaCha8Rng) -> DualProblem {
    let measures: Vec<_> = (0..rng.random_range(2..=3))
        .map(|_| {
            let n = rng.random_range(2..=10);
            let pts = PointSet::new(2, (0..2 * n).map(|_| rng.random::<f64>()).collect()).unwrap();
            DiscreteMeasure::uniform(pts).unwrap()
        })
        .collect();
    let l = 1.0 / measures.len() as f64;
    let z = Grid::uniform(&[0.0, 0.0], &[1.0, 1.0], 5).unwrap().centers();
    DualProblem::new(&measures, &vec![l; measures.len()], z).unwrap()
}

#[test]
fn recovery_history_is_monotone_and_fractions_are_simplex_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let p = random_problem(&mut rng);
        let phi = DualPotentials::from_free(&p, (0..p.n_free()).map(|_| rng.random_range(-0.1..0.1)).collect()).unwrap();
        let st = eval_phi(&p, &phi).unwrap();
        let act = active_set(&p, &st, 0.05).unwrap();
        let rec = recover(&p, &act, &RecoverOptions { max_iters: 500, tol: 0.0 }).unwrap();
        for w in rec.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        for per_pop in &rec.fractions.values {
            for f in per_pop {
                assert!((f.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                assert!(f.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
        assert!((rec.result.nu.total_mass() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn optimal_potentials_reproduce_the_lp_barycenter() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let p = random_problem(&mut rng);
        let run = maximize(&p, &MaximizeOptions::default()).unwrap();
        let act = active_set(&p, &run.state, 1e-5).unwrap();
        let rec = recover(&p, &act, &RecoverOptions::default()).unwrap();
        assert!(rec.residual <= 1e-6, "residual {}", rec.residual);
        let lp = solve_barycenter(p.measures(), &p.costs(), p.z(), &SolveOptions::default()).unwrap();
        assert!((rec.result.value - lp.value).abs() <= 1e-6 * lp.value);
        let pairs: Vec<_> = (0..p.n_populations()).map(|i| act.pairs(i)).collect();
        for r in slackness_report(&p, &run.state, &pairs) {
            assert!(r <= 1e-5 + 1e-12);
        }
    }
}

#[test]
fn min_norm_supergradient_vanishes_at_an_optimum() {
    // two points a, b and the midpoint grid: mass can split at the optimum
    let a = DiscreteMeasure::uniform(PointSet::from_points(&[[0.0], [1.0]]).unwrap()).unwrap();
    let b = a.translate(&[1.0]);
    let z = PointSet::from_points(&[[0.0], [0.5], [1.0], [1.5], [2.0]]).unwrap();
    let p = DualProblem::new(&[a, b], &[0.5, 0.5], z).unwrap();
    let run = maximize(&p, &MaximizeOptions::default()).unwrap();
    let act = active_set(&p, &run.state, 1e-9).unwrap();
    let v = min_norm_supergradient(&p, &run.state, &act, &RecoverOptions::default()).unwrap();
    assert!(v.iter().all(|x| x.abs() <= 1e-10), "{v:?}");
}

proptest! {
    #[test]
    fn simplex_projection_is_the_closest_simplex_point(v in prop::collection::vec(-2.0f64..2.0, 1..8), probe in prop::collection::vec(0.0f64..1.0, 8)) {
        let mut x = v.clone();
        project_simplex(&mut x);
        prop_assert!((x.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(x.iter().all(|&c| c >= 0.0));
        // any other simplex point is no closer
        let total: f64 = probe[..v.len()].iter().sum::<f64>().max(1e-12);
        let q: Vec<f64> = probe[..v.len()].iter().map(|p| p / total).collect();
        let d = |a: &[f64]| a.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        prop_assert!(d(&x) <= d(&q) + 1e-12);
    }
}
