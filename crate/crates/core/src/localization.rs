//! A priori bounds on the barycenter support, used to shrink the quality grid.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::measure::{dist2, CostSpec, Grid, PointSet, SubGrid};
use crate::{Error, Result};

/// Tuple count up to which Minkowski sums and argmin loops enumerate exactly.
pub const DEFAULT_BUDGET: usize = 1_000_000;
pub const DEFAULT_SEED: u64 = 0;
/// Relative tolerance under which grid points tie for the argmin.
const TIE_TOL: f64 = 1e-9;

fn check_supports(supports: &[PointSet], dim: usize) -> Result<()> {
    if supports.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    for s in supports {
        if s.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if s.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: s.dim() });
        }
    }
    Ok(())
}

fn tuple_count(supports: &[PointSet]) -> u128 {
    supports.iter().map(|s| s.len() as u128).product()
}

/// Marks every cell whose center lies within `radius` of `p`.
fn mark_ball(grid: &Grid, p: &[f64], radius: f64, marks: &mut [bool]) {
    let d = grid.dim();
    let mut lo = vec![0usize; d];
    let mut hi = vec![0usize; d];
    for a in 0..d {
        let h = grid.cell_size(a);
        let n = grid.resolution()[a] as f64;
        let from = ((p[a] - radius - grid.lower()[a]) / h - 0.5).ceil().max(0.0);
        let to = ((p[a] + radius - grid.lower()[a]) / h - 0.5).floor().min(n - 1.0);
        if from > to {
            return;
        }
        lo[a] = from as usize;
        hi[a] = to as usize;
    }
    let r2 = radius * radius * (1.0 + 1e-12) + 1e-300;
    let mut idx = lo.clone();
    let mut center = vec![0.0; d];
    loop {
        let k = grid.flat_index(&idx);
        grid.center_into(k, &mut center);
        if dist2(&center, p) <= r2 {
            marks[k] = true;
        }
        let mut a = 0;
        while a < d {
            if idx[a] < hi[a] {
                idx[a] += 1;
                break;
            }
            idx[a] = lo[a];
            a += 1;
        }
        if a == d {
            return;
        }
    }
}

fn marked_subgrid(grid: &Grid, marks: Vec<bool>) -> Result<SubGrid> {
    let cells = marks.iter().enumerate().filter(|(_, &m)| m).map(|(k, _)| k).collect();
    SubGrid::new(grid.clone(), cells)
}

/// Grid points within one cell diameter of `Σ λ_i spt(μ_i)`.
///
/// Up to [`DEFAULT_BUDGET`] tuples the sum is formed exactly. Larger inputs are
/// summed on a lattice with the grid's spacing; each snap moves a point by at
/// most half a cell diameter and that slack is added to the dilation radius.
pub fn minkowski_support(supports: &[PointSet], lambdas: &[f64], grid: &Grid) -> Result<SubGrid> {
    check_supports(supports, grid.dim())?;
    if lambdas.len() != supports.len() {
        return Err(Error::InvalidInput(format!("{} weights for {} supports", lambdas.len(), supports.len())));
    }
    if lambdas.iter().any(|&l| !(l > 0.0)) || (lambdas.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput("weights must be positive and sum to one".into()));
    }
    let d = grid.dim();
    let diam = grid.cell_diameter();
    let mut marks = vec![false; grid.len()];

    if tuple_count(supports) <= DEFAULT_BUDGET as u128 {
        let sizes: Vec<usize> = supports.iter().map(PointSet::len).collect();
        let mut idx = vec![0usize; sizes.len()];
        let mut z = vec![0.0; d];
        loop {
            z.iter_mut().for_each(|c| *c = 0.0);
            for (i, &j) in idx.iter().enumerate() {
                for (c, x) in z.iter_mut().zip(supports[i].point(j)) {
                    *c += lambdas[i] * x;
                }
            }
            mark_ball(grid, &z, diam, &mut marks);
            if !advance(&mut idx, &sizes) {
                break;
            }
        }
        return marked_subgrid(grid, marks);
    }

    let h: Vec<f64> = (0..d).map(|a| grid.cell_size(a)).collect();
    let snap = |p: &[f64], l: f64| -> Vec<i64> { (0..d).map(|a| (l * p[a] / h[a]).round() as i64).collect() };
    let mut acc: HashSet<Vec<i64>> = supports[0].iter().map(|p| snap(p, lambdas[0])).collect();
    for (s, &l) in supports.iter().zip(lambdas).skip(1) {
        let step: HashSet<Vec<i64>> = s.iter().map(|p| snap(p, l)).collect();
        let mut next = HashSet::with_capacity(acc.len());
        for q in &acc {
            for r in &step {
                next.insert(q.iter().zip(r).map(|(a, b)| a + b).collect::<Vec<i64>>());
            }
        }
        acc = next;
    }
    let radius = diam * (1.0 + 0.5 * supports.len() as f64);
    let mut p = vec![0.0; d];
    for q in &acc {
        for a in 0..d {
            p[a] = q[a] as f64 * h[a];
        }
        mark_ball(grid, &p, radius, &mut marks);
    }
    marked_subgrid(grid, marks)
}

/// Odometer step over a mixed-radix tuple; false once it wraps around.
fn advance(idx: &mut [usize], sizes: &[usize]) -> bool {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < sizes[a] {
            return true;
        }
        idx[a] = 0;
    }
    false
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SupportMode {
    Exact,
    Sampled,
}

#[derive(Clone, Debug)]
pub struct CandidateSupport {
    pub cells: SubGrid,
    pub mode: SupportMode,
    pub tuples_tested: usize,
}

/// Grid points that minimize `Σ_i c_i(x_i, ·)` over the grid for at least one
/// tested tuple. Tuples are enumerated when there are at most `budget` of them
/// and otherwise drawn uniformly with a ChaCha generator seeded by `seed`.
pub fn candidate_support(
    costs: &[CostSpec],
    supports: &[PointSet],
    grid: &Grid,
    budget: usize,
    seed: u64,
) -> Result<CandidateSupport> {
    check_supports(supports, grid.dim())?;
    if costs.len() != supports.len() {
        return Err(Error::InvalidInput(format!("{} costs for {} supports", costs.len(), supports.len())));
    }
    if budget == 0 {
        return Err(Error::InvalidInput("sample budget must be at least 1".into()));
    }
    let centers = grid.centers();
    let n_z = centers.len();
    let mats: Vec<Vec<f64>> = costs.iter().zip(supports).map(|(c, s)| c.matrix(s, &centers)).collect::<Result<_>>()?;
    let sizes: Vec<usize> = supports.iter().map(PointSet::len).collect();
    let mut marks = vec![false; n_z];
    let mut acc = vec![0.0; n_z];
    let mut test = |idx: &[usize], marks: &mut [bool]| {
        acc.copy_from_slice(&mats[0][idx[0] * n_z..(idx[0] + 1) * n_z]);
        for (i, &j) in idx.iter().enumerate().skip(1) {
            for (a, c) in acc.iter_mut().zip(&mats[i][j * n_z..(j + 1) * n_z]) {
                *a += c;
            }
        }
        let best = acc.iter().copied().fold(f64::INFINITY, f64::min);
        let cut = best + TIE_TOL * best.abs().max(1.0);
        for (m, &a) in marks.iter_mut().zip(&acc) {
            if a <= cut {
                *m = true;
            }
        }
    };

    let total = tuple_count(supports);
    let mut idx = vec![0usize; sizes.len()];
    let (mode, tested) = if total <= budget as u128 {
        loop {
            test(&idx, &mut marks);
            if !advance(&mut idx, &sizes) {
                break;
            }
        }
        (SupportMode::Exact, total as usize)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..budget {
            for (j, &s) in idx.iter_mut().zip(&sizes) {
                *j = rng.random_range(0..s);
            }
            test(&idx, &mut marks);
        }
        (SupportMode::Sampled, budget)
    };
    Ok(CandidateSupport { cells: marked_subgrid(grid, marks)?, mode, tuples_tested: tested })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> Grid {
        Grid::uniform(&[0.0, 0.0], &[1.0, 1.0], n).unwrap()
    }

    #[test]
    fn two_points_give_ball_around_midpoint() {
        let grid = unit_grid(10);
        let a = PointSet::from_points(&[[0.1, 0.1]]).unwrap();
        let b = PointSet::from_points(&[[0.7, 0.5]]).unwrap();
        let sub = minkowski_support(&[a, b], &[0.5, 0.5], &grid).unwrap();
        let mid = [0.4, 0.3];
        let diam = grid.cell_diameter();
        for k in 0..grid.len() {
            let inside = dist2(&grid.center(k), &mid).sqrt() <= diam * (1.0 + 1e-9);
            assert_eq!(sub.contains(k), inside, "cell {k}");
        }
    }

    #[test]
    fn lattice_sum_covers_every_tuple_mean() {
        let grid = unit_grid(20);
        let pts = |off: f64| {
            let v: Vec<[f64; 2]> = (0..40).map(|i| [off + 0.013 * i as f64, 0.2 + 0.011 * (i * i % 37) as f64]).collect();
            PointSet::from_points(&v).unwrap()
        };
        let s = [pts(0.1), pts(0.3), pts(0.2), pts(0.0)];
        let l = [0.1, 0.2, 0.3, 0.4];
        // 40^4 tuples exceeds the exact budget
        let sub = minkowski_support(&s, &l, &grid).unwrap();
        let mut idx = [0usize; 4];
        loop {
            let mut z = [0.0; 2];
            for i in 0..4 {
                let p = s[i].point(idx[i]);
                z[0] += l[i] * p[0];
                z[1] += l[i] * p[1];
            }
            assert!(sub.contains(grid.cell_of(&z).unwrap()));
            if !advance(&mut idx, &[40; 4]) {
                break;
            }
        }
    }

    #[test]
    fn single_population_quadratic_candidates_are_nearest_cells() {
        let grid = unit_grid(8);
        let s = PointSet::from_points(&[[0.13, 0.77], [0.52, 0.02]]).unwrap();
        let c = candidate_support(&[CostSpec::power(2.0, 1.0)], &[s.clone()], &grid, 10, 0).unwrap();
        assert_eq!(c.mode, SupportMode::Exact);
        let mut want: Vec<usize> = s.iter().map(|p| grid.cell_of(p).unwrap()).collect();
        want.sort();
        assert_eq!(c.cells.cells(), &want[..]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let grid = unit_grid(6);
        let s = PointSet::from_points(&[[0.1, 0.1], [0.9, 0.2], [0.4, 0.8]]).unwrap();
        let costs = vec![CostSpec::power(1.5, 1.0 / 3.0); 3];
        let sup = vec![s.clone(), s.clone(), s];
        let a = candidate_support(&costs, &sup, &grid, 5, 0).unwrap();
        let b = candidate_support(&costs, &sup, &grid, 5, 0).unwrap();
        assert_eq!(a.mode, SupportMode::Sampled);
        assert_eq!(a.cells.cells(), b.cells.cells());
    }

    #[test]
    fn rejects_bad_weights_and_empty_supports() {
        let grid = unit_grid(4);
        let s = PointSet::from_points(&[[0.5, 0.5]]).unwrap();
        assert!(minkowski_support(&[s.clone()], &[0.9], &grid).is_err());
        assert!(minkowski_support(&[PointSet::empty(2)], &[1.0], &grid).is_err());
        assert!(candidate_support(&[CostSpec::power(2.0, 1.0)], &[s], &grid, 0, 0).is_err());
    }
}
