use baryline::barycenter::{multimarginal_oracle, refine, solve_barycenter};
use baryline::dual::{maximize, DualProblem, MaximizeOptions};
use baryline::localization::{candidate_support, minkowski_support};
use baryline::lp::SolveOptions;
use baryline::measure::{quantize, stability_bound, wasserstein1, Density};
use baryline::reconstruct::{active_set, recover, RecoverOptions};
use baryline::{CostSpec, DiscreteMeasure, Grid, PointSet, SubGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> DiscreteMeasure {
    let pts = PointSet::new(2, (0..2 * n).map(|_| rng.random::<f64>()).collect()).unwrap();
    let w = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    DiscreteMeasure::new(pts, w).unwrap().normalize().unwrap()
}

fn random_costs(rng: &mut ChaCha8Rng, n: usize) -> Vec<CostSpec> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let p = [1.0, 1.5, 2.0, 3.0][rng.random_range(0..4)];
    raw.iter().map(|l| CostSpec::power(p, l / total)).collect()
}

fn unit_grid(n: usize) -> Grid {
    Grid::uniform(&[0.0, 0.0], &[1.0, 1.0], n).unwrap()
}

#[test]
fn coupling_lp_equals_multimarginal_problem() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let n_pop = rng.random_range(2..=3);
        let measures: Vec<_> = (0..n_pop)
            .map(|_| {
                let n = rng.random_range(1..=5);
                random_measure(&mut rng, n)
            })
            .collect();
        let costs = random_costs(&mut rng, n_pop);
        let z = unit_grid(rng.random_range(2..=4)).centers();
        let lp = solve_barycenter(&measures, &costs, &z, &SolveOptions::default()).unwrap();
        let mm = multimarginal_oracle(&measures, &costs, &z).unwrap();
        assert!((lp.value - mm).abs() <= 1e-7, "{} vs {}", lp.value, mm);
        assert!(lp.marginal_spread() <= 1e-9);
    }
}

#[test]
fn population_order_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let measures: Vec<_> = (0..3).map(|_| random_measure(&mut rng, 6)).collect();
        let costs = random_costs(&mut rng, 3);
        let z = unit_grid(4).centers();
        let a = solve_barycenter(&measures, &costs, &z, &SolveOptions::default()).unwrap();
        let order = [2, 0, 1];
        let m2: Vec<_> = order.iter().map(|&i| measures[i].clone()).collect();
        let c2: Vec<_> = order.iter().map(|&i| costs[i].clone()).collect();
        let b = solve_barycenter(&m2, &c2, &z, &SolveOptions::default()).unwrap();
        assert!((a.value - b.value).abs() <= 1e-10);
    }
}

#[test]
fn dirac_pair_interpolates_on_both_routes() {
    let grid = Grid::uniform(&[0.0, 0.0], &[1.0, 1.0], 10).unwrap();
    let (a, b) = ([0.05, 0.15], [0.85, 0.55]);
    for t in [0.25, 0.5, 0.75] {
        let target = [(1.0 - t) * a[0] + t * b[0], (1.0 - t) * a[1] + t * b[1]];
        let k = grid.cell_of(&target).unwrap();
        let ms = [DiscreteMeasure::dirac(&a).unwrap(), DiscreteMeasure::dirac(&b).unwrap()];

        let costs = [CostSpec::power(2.0, 1.0 - t), CostSpec::power(2.0, t)];
        let lp = solve_barycenter(&ms, &costs, &grid.centers(), &SolveOptions::default()).unwrap();
        assert_eq!(lp.nu.weights()[k], 1.0);

        let p = DualProblem::new(&ms, &[1.0 - t, t], grid.centers()).unwrap();
        let run = maximize(&p, &MaximizeOptions::default()).unwrap();
        let act = active_set(&p, &run.state, 1e-5).unwrap();
        let rec = recover(&p, &act, &RecoverOptions::default()).unwrap();
        assert_eq!(rec.result.nu.weights()[k], 1.0);
        assert_eq!(rec.residual, 0.0);
    }
}

#[test]
fn lp_support_lies_in_the_minkowski_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let grid = unit_grid(12);
    for _ in 0..10 {
        let n_pop = rng.random_range(2..=3);
        let measures: Vec<_> = (0..n_pop).map(|_| random_measure(&mut rng, 8)).collect();
        let raw: Vec<f64> = (0..n_pop).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let lambdas: Vec<f64> = raw.iter().map(|l| l / total).collect();
        let costs: Vec<_> = lambdas.iter().map(|&l| CostSpec::power(2.0, l)).collect();
        let lp = solve_barycenter(&measures, &costs, &grid.centers(), &SolveOptions::default()).unwrap();
        let supports: Vec<PointSet> = measures.iter().map(|m| m.points().clone()).collect();
        let mink = minkowski_support(&supports, &lambdas, &grid).unwrap();
        let cand = candidate_support(&costs, &supports, &grid, 1_000_000, 0).unwrap();
        for k in lp.support() {
            assert!(mink.contains(k), "cell {k} outside the Minkowski set");
            assert!(cand.cells.contains(k), "cell {k} is not a tuple minimizer");
        }
    }
}

#[test]
fn odd_refinement_does_not_increase_the_value() {
    let grid = unit_grid(6);
    let vert = |x: &[f64]| if (0.4..0.6).contains(&x[0]) && (0.1..0.9).contains(&x[1]) { 1.0 } else { 0.0 };
    let horiz = |x: &[f64]| if (0.1..0.9).contains(&x[0]) && (0.4..0.6).contains(&x[1]) { 1.0 } else { 0.0 };
    let fine = unit_grid(20);
    let ms = [quantize(Density::Function(&vert), &fine).unwrap(), quantize(Density::Function(&horiz), &fine).unwrap()];
    let costs = [CostSpec::power(2.0, 0.5), CostSpec::power(2.0, 0.5)];
    let coarse_cells = SubGrid::full(grid);
    let coarse = solve_barycenter(&ms, &costs, &coarse_cells.points(), &SolveOptions::default()).unwrap();
    // with an odd factor every coarse center is also a fine center
    let (refined, cells) = refine(&ms, &costs, &coarse, &coarse_cells, 3, &SolveOptions::default()).unwrap();
    assert_eq!(cells.grid().resolution(), &[18, 18]);
    assert!(refined.value <= coarse.value + 1e-9);
}

#[test]
fn values_stay_within_the_stability_bound_on_a_refinement_ladder() {
    let line = |lo: f64, hi: f64, n: usize| Grid::new(vec![lo], vec![hi], vec![n]).unwrap();
    let f0 = |x: &[f64]| if x[0] < 0.4 { 1.0 } else { 0.0 };
    let f1 = |x: &[f64]| 2.0 * x[0];
    let ladder = |n: usize| {
        let g = line(0.0, 1.0, n);
        [quantize(Density::Function(&f0), &g).unwrap(), quantize(Density::Function(&f1), &g).unwrap()]
    };
    let z = line(0.0, 1.0, 16).centers();
    for p in [1.0, 2.0] {
        // Lipschitz in x on [0,1]: λ p |x − z|^{p−1} ≤ λ p
        let costs = [CostSpec::power(p, 0.3).with_lipschitz(0.3 * p), CostSpec::power(p, 0.7).with_lipschitz(0.7 * p)];
        let reference = ladder(256);
        let v_ref = solve_barycenter(&reference, &costs, &z, &SolveOptions::default()).unwrap().value;
        for n in [4, 8, 16, 32] {
            let ms = ladder(n);
            let gaps: Vec<f64> = ms.iter().zip(&reference).map(|(a, b)| wasserstein1(a, b).unwrap()).collect();
            let v = solve_barycenter(&ms, &costs, &z, &SolveOptions::default()).unwrap().value;
            let bound = stability_bound(&costs, &gaps).unwrap();
            assert!((v - v_ref).abs() <= bound + 1e-12, "p={p} n={n}: |{v} − {v_ref}| > {bound}");
        }
    }
}
