use baryline::barycenter::{multimarginal_oracle, solve_barycenter};
use baryline::dual::{maximize, maximize_from, mean_shift_start, DualPotentials, DualProblem, DualStatus, MaximizeOptions};
use baryline::gaussian::barycenter_gaussian;
use baryline::localization::{candidate_support, minkowski_support};
use baryline::lp::SolveOptions;
use baryline::measure::ot_cost;
use baryline::reconstruct::{active_set, recover, RecoverOptions};
use baryline::{CostSpec, DiscreteMeasure, PointSet, SubGrid};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::OutputDir;
use crate::{Common, DualArgs, InterpolateArgs, Localize, LocalizeArgs, LpArgs, Route, Start, ZArgs};

/// Values must agree this closely for `oracle-check` to succeed.
const LP_MM_TOL: f64 = 1e-7;
const LP_DUAL_REL_TOL: f64 = 1e-6;

fn quality_cells(
    cfg: &RunConfig,
    z: &ZArgs,
    measures: &[DiscreteMeasure],
    costs: &[CostSpec],
    seed: u64,
) -> Result<SubGrid> {
    let grid = match z.grid {
        Some(n) => cfg.z.with_resolution(n).build("z")?,
        None => cfg.z.build("z")?,
    };
    let supports: Vec<PointSet> = measures.iter().map(|m| m.points().clone()).collect();
    let cells = match z.localize {
        Localize::None => SubGrid::full(grid),
        Localize::Minkowski => {
            if !costs.iter().all(CostSpec::is_quadratic) {
                return Err(CliError::config("measure.cost", "Minkowski localization needs quadratic costs"));
            }
            let a: Vec<f64> = costs.iter().map(|c| c.factor * c.lambda).collect();
            let total: f64 = a.iter().sum();
            let lambdas: Vec<f64> = a.iter().map(|x| x / total).collect();
            minkowski_support(&supports, &lambdas, &grid)?
        }
        Localize::Candidate => {
            let found = candidate_support(costs, &supports, &grid, z.budget, seed)?;
            log::info!("candidate support: {:?} mode, {} tuples", found.mode, found.tuples_tested);
            found.cells
        }
    };
    if cells.is_empty() {
        return Err(CliError::config("z", "no quality points left after localization"));
    }
    log::info!("{} of {} quality points kept", cells.len(), cells.grid().len());
    Ok(cells)
}

/// Quadratic costs `λ_i|x − z|^2` in the config become the dual's `(λ_i/2)|x − z|²`.
fn dual_problem(cfg: &RunConfig, measures: &[DiscreteMeasure], costs: &[CostSpec], z: PointSet) -> Result<DualProblem> {
    if let Some(i) = costs.iter().position(|c| !c.is_quadratic()) {
        return Err(CliError::config(format!("measure[{i}].cost"), "the dual route needs quadratic costs"));
    }
    Ok(DualProblem::new(measures, &cfg.lambdas()?, z)?)
}

fn report_written(paths: &[std::path::PathBuf]) {
    for p in paths {
        log::info!("wrote {}", p.display());
    }
}

pub fn lp_solve(a: &LpArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.common.config)?;
    cfg.require_measures(1)?;
    let measures = cfg.measures()?;
    let opts = SolveOptions { max_iters: None, tol: a.tol };

    if let Some(target) = cfg.target()? {
        if measures.len() != 1 {
            return Err(CliError::config("target", "only valid with a single measure"));
        }
        let (value, plan) = ot_cost(&measures[0], &target, &cfg.target_cost()?)?;
        println!("ot_cost={value}");
        println!("plan_entries={}", plan.entries().len());
        return Ok(());
    }

    let costs = cfg.costs()?;
    let cells = quality_cells(&cfg, &a.z, &measures, &costs, a.common.seed)?;
    let res = solve_barycenter(&measures, &costs, &cells.points(), &opts)?;
    println!("value={}", res.value);
    println!("iterations={}", res.iterations);
    println!("support={}", res.support().len());
    println!("population_costs={:?}", res.population_costs);
    let out = OutputDir::create(cfg.output_dir(a.common.out.as_deref()))?;
    report_written(&out.density("nu", &res.nu, &cells)?);
    Ok(())
}

pub fn dual_solve(a: &DualArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.common.config)?;
    cfg.require_measures(1)?;
    let measures = cfg.measures()?;
    let costs = cfg.costs()?;
    let cells = quality_cells(&cfg, &a.z, &measures, &costs, a.common.seed)?;
    let problem = dual_problem(&cfg, &measures, &costs, cells.points())?;
    let start = match a.start {
        Start::Zero => DualPotentials::zeros(&problem),
        Start::MeanShift => mean_shift_start(&problem),
    };
    let opts = MaximizeOptions { memory: a.memory, max_iters: a.max_iters, tol: a.tol, ..Default::default() };
    let run = maximize_from(&problem, start, &opts)?;
    let active = active_set(&problem, &run.state, a.epsilon)?;
    let rec = recover(&problem, &active, &RecoverOptions::default())?;

    let out = OutputDir::create(cfg.output_dir(a.common.out.as_deref()))?;
    let mut written = vec![out.iterations("iterations.csv", &run.log)?];
    written.extend(out.density("nu", &rec.result.nu, &cells)?);
    report_written(&written);
    println!("status={:?}", run.status);
    println!("value={}", run.state.value);
    println!("iterations={}", run.iterations);
    println!("active_pairs={}", active.len());
    println!("max_quadratic_term={:e}", rec.residual);
    if run.status == DualStatus::IterationLimit {
        return Err(CliError::NotConverged(format!("dual ascent reached the limit of {} iterations", a.max_iters)));
    }
    Ok(())
}

pub fn localize(a: &LocalizeArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.common.config)?;
    cfg.require_measures(1)?;
    let measures = cfg.measures()?;
    let costs = cfg.costs()?;
    let cells = quality_cells(&cfg, &a.z, &measures, &costs, a.common.seed)?;
    let out = OutputDir::create(cfg.output_dir(a.common.out.as_deref()))?;
    report_written(&[out.points("support.csv", &cells)?]);
    println!("cells={}", cells.len());
    println!("grid_cells={}", cells.grid().len());
    Ok(())
}

fn format_row(v: impl Iterator<Item = f64>) -> String {
    let parts: Vec<String> = v.map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

pub fn gaussian_oracle(a: &Common) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    cfg.require_measures(1)?;
    let bary = barycenter_gaussian(&cfg.gaussians()?)?;
    println!("mean={}", format_row(bary.mean.iter().copied()));
    let rows: Vec<String> = bary.cov.row_iter().map(|r| format_row(r.iter().copied())).collect();
    println!("cov=[{}]", rows.join(", "));
    println!("sigma={}", bary.sigma());
    Ok(())
}

pub fn interpolate(a: &InterpolateArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.common.config)?;
    if cfg.measure.len() != 2 {
        return Err(CliError::config("measure", format!("interpolation needs 2 measures, found {}", cfg.measure.len())));
    }
    let measures = cfg.measures()?;
    let out = OutputDir::create(cfg.output_dir(a.common.out.as_deref()))?;
    for &t in &a.weights {
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::config("weights", format!("{t} is not inside (0, 1)")));
        }
        let costs = [CostSpec::power(2.0, 1.0 - t), CostSpec::power(2.0, t)];
        let cells = quality_cells(&cfg, &a.z, &measures, &costs, a.common.seed)?;
        let nu = match a.route {
            Route::Lp => solve_barycenter(&measures, &costs, &cells.points(), &SolveOptions::default())?.nu,
            Route::Dual => {
                let p = DualProblem::new(&measures, &[1.0 - t, t], cells.points())?;
                let run = maximize(&p, &MaximizeOptions::default())?;
                let rec = recover(&p, &active_set(&p, &run.state, 1e-5)?, &RecoverOptions::default())?;
                println!("t={t} status={:?} max_quadratic_term={:e}", run.status, rec.residual);
                rec.result.nu
            }
        };
        report_written(&out.density(&format!("frame_{t}"), &nu, &cells)?);
        println!("t={t} mean={}", format_row(nu.mean().into_iter()));
    }
    Ok(())
}

pub fn oracle_check(a: &Common) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    cfg.require_measures(1)?;
    let measures = cfg.measures()?;
    let z = cfg.z.build("z")?.centers();
    let problem = dual_problem(&cfg, &measures, &cfg.costs()?, z.clone())?;
    // all three routes use the dual's cost convention
    let costs = problem.costs();
    let lp = solve_barycenter(&measures, &costs, &z, &SolveOptions::default())?.value;
    let mm = multimarginal_oracle(&measures, &costs, &z)?;
    let dual = maximize(&problem, &MaximizeOptions::default())?.state.value;
    let mm_gap = (lp - mm).abs();
    let dual_gap = (lp - dual).abs() / lp.abs().max(f64::MIN_POSITIVE);
    println!("lp_value={lp}");
    println!("dual_value={dual}");
    println!("multimarginal_value={mm}");
    println!("lp_multimarginal_gap={mm_gap:e}");
    println!("lp_dual_rel_gap={dual_gap:e}");
    let agree = mm_gap <= LP_MM_TOL && dual_gap <= LP_DUAL_REL_TOL;
    println!("agree={agree}");
    if agree {
        Ok(())
    } else {
        Err(CliError::NotConverged("the three values disagree".into()))
    }
}
