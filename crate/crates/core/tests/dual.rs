use baryline::barycenter::solve_barycenter;
use baryline::dual::{eval_phi, maximize, supergradient_check, DualPotentials, DualProblem, DualStatus, MaximizeOptions};
use baryline::lp::SolveOptions;
use baryline::{DiscreteMeasure, Grid, PointSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> DiscreteMeasure {
    let pts = PointSet::new(2, (0..2 * n).map(|_| rng.random::<f64>()).collect()).unwrap();
    let w = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    DiscreteMeasure::new(pts, w).unwrap().normalize().unwrap()
}

fn random_problem(rng: &mut ChaCha8Rng) -> DualProblem {
    let n_pop = rng.random_range(2..=3);
    let measures: Vec<_> = (0..n_pop)
        .map(|_| {
            let n = rng.random_range(1..=15);
            random_measure(rng, n)
        })
        .collect();
    let raw: Vec<f64> = (0..n_pop).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let lambdas: Vec<f64> = raw.iter().map(|l| l / total).collect();
    let z = Grid::uniform(&[0.0, 0.0], &[1.0, 1.0], rng.random_range(2..=5)).unwrap().centers();
    DualProblem::new(&measures, &lambdas, z).unwrap()
}

fn random_potentials(rng: &mut ChaCha8Rng, p: &DualProblem) -> DualPotentials {
    DualPotentials::from_free(p, (0..p.n_free()).map(|_| rng.random_range(-0.3..0.3)).collect()).unwrap()
}

fn naive_phi(p: &DualProblem, phi: &DualPotentials) -> f64 {
    let mut v = 0.0;
    for (i, mu) in p.measures().iter().enumerate() {
        for (j, &w) in mu.weights().iter().enumerate() {
            let best = (0..p.n_z()).map(|k| p.cost(i, j, k) - phi.get(i, k)).fold(f64::INFINITY, f64::min);
            v += w * best;
        }
    }
    v
}

#[test]
fn kd_tree_evaluation_equals_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let p = random_problem(&mut rng);
        let phi = random_potentials(&mut rng, &p);
        let st = eval_phi(&p, &phi).unwrap();
        assert!((st.value - naive_phi(&p, &phi)).abs() <= 1e-12);
        for (i, assign) in st.assignments.iter().enumerate() {
            for (j, &k) in assign.iter().enumerate() {
                let g = p.cost(i, j, k) - phi.get(i, k);
                assert!((g - st.transforms[i][j]).abs() <= 1e-15);
            }
        }
    }
}

#[test]
fn phi_is_concave_and_supergradients_bound_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let p = random_problem(&mut rng);
        let a = random_potentials(&mut rng, &p);
        let b = random_potentials(&mut rng, &p);
        let t: f64 = rng.random();
        let mix: Vec<f64> = a.free().iter().zip(b.free()).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let mix = DualPotentials::from_free(&p, mix).unwrap();
        let (fa, fb, fm) =
            (eval_phi(&p, &a).unwrap().value, eval_phi(&p, &b).unwrap().value, eval_phi(&p, &mix).unwrap().value);
        assert!(fm >= t * fa + (1.0 - t) * fb - 1e-10);
        let sa = eval_phi(&p, &a).unwrap();
        assert!(supergradient_check(&p, &sa, &b).unwrap());
    }
}

#[test]
fn supergradient_is_minus_the_image_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = random_problem(&mut rng);
    let phi = random_potentials(&mut rng, &p);
    let st = eval_phi(&p, &phi).unwrap();
    let n_pop = p.n_populations();
    let mut images = vec![vec![0.0; p.n_z()]; n_pop];
    for (i, mu) in p.measures().iter().enumerate() {
        for (j, &w) in mu.weights().iter().enumerate() {
            images[i][st.assignments[i][j]] += w;
        }
    }
    for i in 0..n_pop - 1 {
        for k in 0..p.n_z() {
            let want = images[n_pop - 1][k] - images[i][k];
            assert!((st.supergrad[i * p.n_z() + k] - want).abs() < 1e-15);
        }
    }
}

#[test]
fn ascent_never_decreases_and_stays_below_the_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let p = random_problem(&mut rng);
        let run = maximize(&p, &MaximizeOptions::default()).unwrap();
        for w in run.log.windows(2) {
            assert!(w[1].value >= w[0].value);
        }
        let lp = solve_barycenter(p.measures(), &p.costs(), p.z(), &SolveOptions::default()).unwrap();
        assert!(run.state.value <= lp.value + 1e-12);
        assert!((lp.value - run.state.value) / lp.value <= 1e-6);
    }
}

#[test]
fn aligned_translates_reach_a_certified_optimum() {
    // the half shift puts every atom midway between grid points, so the
    // ascent has to leave kinks to finish
    let grid = Grid::uniform(&[0.0, 0.0], &[1.0, 1.0], 8).unwrap();
    let sq: Vec<usize> = (0..grid.len()).filter(|&k| grid.multi_index(k).iter().all(|&i| i < 3)).collect();
    let pts = grid.centers().select(&sq);
    let a = DiscreteMeasure::uniform(pts.clone()).unwrap();
    let b = a.translate(&[0.375, 0.375]);
    let p = DualProblem::new(&[a, b], &[0.5, 0.5], grid.centers()).unwrap();
    let run = maximize(&p, &MaximizeOptions::default()).unwrap();
    assert_eq!(run.status, DualStatus::Optimal);
    let lp = solve_barycenter(p.measures(), &p.costs(), p.z(), &SolveOptions::default()).unwrap();
    assert!((run.state.value - lp.value).abs() < 1e-12, "{} vs {}", run.state.value, lp.value);
}
