//! The five subcommands. Each writes its files through [`OutputDir`] and
//! returns the parameters echoed into the manifest.

use std::thread;
use std::time::Instant;

use mmbm_core::fluid::alt_solution;
use mmbm_core::limit::interior_grid;
use mmbm_core::simulation::{simulate_fluid_path, simulate_mmbm_path, CdfFn};
use mmbm_core::validation::DiscretizedDensity;
use mmbm_core::{
    build_fluid_approximation, cross_check, discretization_oracle, finite_buffer_solution, ks_distance,
    lambda_sweep, stationary_density, EmpiricalLaw, Error, FiniteBufferSolution, MmbmModel, SimConfig,
};
use nalgebra::{DMatrix, RowDVector};
use serde_json::{json, Value};

use crate::cli::{Cli, Command, Mode, SimArgs};
use crate::diag::CliError;
use crate::io::{load_model, phase_header, OutputDir, Table};
use crate::manifest::{RunManifest, MANIFEST_NAME};

/// Tolerances of the `compare` checks.
pub const TOL_TIME_REVERSED: f64 = 1e-6;
pub const TOL_ORACLE: f64 = 1e-4;
pub const TOL_SIMULATION: f64 = 0.02;

type CmdResult = Result<Value, CliError>;

/// Runs one command and writes its manifest; returns the manifest.
pub fn execute(cli: &Cli) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let cmd = &cli.command;
    let io = cmd.io();
    let mut out = OutputDir::create(&io.out_dir)?;
    // A stale manifest would claim an unfinished run as complete.
    let _ = std::fs::remove_file(io.out_dir.join(MANIFEST_NAME));
    let model = load_model(&io.model)?;
    let parameters = match cmd {
        Command::Solve { grid, .. } => cmd_solve(&model, *grid, &mut out)?,
        Command::Fluid { grid, eps, check_alt, .. } => cmd_fluid(&model, *eps, *grid, *check_alt, &mut out)?,
        Command::Sweep { eps_list, .. } => cmd_sweep(&model, eps_list, &mut out)?,
        Command::Simulate { mode, eps, sim, .. } => cmd_simulate(&model, *mode, *eps, sim, &mut out)?,
        Command::Compare { cells, sim, .. } => cmd_compare(&model, *cells, sim, &mut out)?,
    };
    let manifest = RunManifest {
        command: cmd.name().into(),
        model: io.model.display().to_string(),
        parameters,
        outputs: out.written().iter().map(|p| p.display().to_string()).collect(),
        version: env!("CARGO_PKG_VERSION").into(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    manifest.write(out.root())?;
    Ok(manifest)
}

fn check_grid(grid: usize) -> Result<usize, CliError> {
    if grid == 0 {
        return Err(Error::InvalidConfig("grid must be at least 1".into()).into());
    }
    Ok(grid)
}

fn row(v: &RowDVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Eigenvalues as `[re, im]` pairs, sorted for a stable listing.
fn eigenvalues(k: &DMatrix<f64>) -> Vec<[f64; 2]> {
    let mut ev: Vec<[f64; 2]> = k.complex_eigenvalues().iter().map(|z| [z.re, z.im]).collect();
    ev.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    ev
}

pub fn cmd_solve(model: &MmbmModel, grid: usize, out: &mut OutputDir) -> CmdResult {
    let grid = check_grid(grid)?;
    let sol = stationary_density(model)?;
    let m = model.phases();
    let mut density = Table::new(phase_header(&["x"], m));
    let mut cdf = Table::new(phase_header(&["x"], m));
    for x in interior_grid(model.b(), grid) {
        density.push([x].into_iter().chain(sol.density(x)?.iter().copied()).collect());
        cdf.push([x].into_iter().chain(sol.cdf(x)?.iter().copied()).collect());
    }
    out.write_csv("density.csv", &density)?;
    out.write_csv("cdf.csv", &cdf)?;
    let d0 = sol.density(0.0)?;
    out.write_json(
        "summary.json",
        &json!({
            "limit": true,
            "b": model.b(),
            "mass0": row(&sol.mass0()),
            "massb": row(&sol.massb()),
            "c": sol.cstar,
            "alpha": row(sol.alpha()),
            "density_at_0": row(&d0),
            "level_density_at_0": d0.sum(),
            "cdf_at_b": row(&sol.cdf(model.b())?),
            "nu0": row(&sol.nu0),
            "k0_eigenvalues": eigenvalues(&sol.lm.k0),
            "k0_star_eigenvalues": eigenvalues(&sol.lm.k0_star),
            "coupling_radius": sol.lm.coupling_radius(),
            "cond_N0": sol.cond_n0,
        }),
    )?;
    Ok(json!({ "grid": grid }))
}

/// Largest gap in full-space density and masses between two solutions.
pub fn route_discrepancy(a: &FiniteBufferSolution, b: &FiniteBufferSolution, grid: usize) -> Result<f64, Error> {
    let mut worst = (&a.p0_minus - &b.p0_minus).amax().max((&a.pb_plus - &b.pb_plus).amax());
    for x in interior_grid(a.b, grid) {
        worst = worst.max((a.density_at(x)?.full - b.density_at(x)?.full).amax());
    }
    Ok(worst)
}

pub fn cmd_fluid(model: &MmbmModel, eps: f64, grid: usize, check_alt: bool, out: &mut OutputDir) -> CmdResult {
    let grid = check_grid(grid)?;
    let fluid = build_fluid_approximation(model, eps)?;
    let sol = finite_buffer_solution(&fluid, model.b())?;
    let m = model.phases();
    let mut density = Table::new(phase_header(&["x"], m));
    for x in interior_grid(model.b(), grid) {
        let d = sol.density_at(x)?;
        let d = d.collapsed.unwrap_or(d.full);
        density.push([x].into_iter().chain(d.iter().copied()).collect());
    }
    out.write_csv("density.csv", &density)?;
    let mass0 = sol.mass0_collapsed().unwrap_or_else(|| RowDVector::zeros(m));
    let massb = sol.massb_collapsed().unwrap_or_else(|| RowDVector::zeros(m));
    let mut summary = json!({
        "eps": eps,
        "b": model.b(),
        "mass0": row(&mass0),
        "massb": row(&massb),
        "c": sol.c,
        "p0_minus": row(&sol.p0_minus),
        "pb_plus": row(&sol.pb_plus),
        "nu": sol.nu.as_ref().map(row),
        "total_mass": sol.total_mass()?,
        "cond_N": sol.cond_n,
    });
    if check_alt {
        let alt = alt_solution(&fluid, model.b())?;
        summary["discrepancy"] = json!(route_discrepancy(&sol, &alt, grid)?);
    }
    out.write_json("summary.json", &summary)?;
    Ok(json!({ "eps": eps, "grid": grid, "check_alt": check_alt }))
}

pub fn cmd_sweep(model: &MmbmModel, eps_list: &[f64], out: &mut OutputDir) -> CmdResult {
    let report = lambda_sweep(model, eps_list)?;
    let mut table = Table::new(["eps", "distance", "mass0", "massb", "cond_N"]);
    for p in &report.points {
        table.push(vec![p.eps, p.distance, p.mass0, p.massb, p.cond_n]);
    }
    out.write_csv("sweep.csv", &table)?;
    let points: Vec<Value> = report
        .points
        .iter()
        .map(|p| {
            json!({
                "eps": p.eps,
                "distance": p.distance,
                "mass0": p.mass0,
                "massb": p.massb,
                "cond_N": p.cond_n,
                "k_error": p.k_error,
            })
        })
        .collect();
    out.write_json(
        "sweep.json",
        &json!({
            "slope": report.slope,
            "resorted": report.resorted,
            "monotone": report.monotone(0.1),
            "mass_ratios": report.mass_ratios(),
            "points": points,
        }),
    )?;
    Ok(json!({ "eps_list": eps_list }))
}

/// Runs `cfg.paths` independent paths on a bounded pool of threads and
/// merges them in path order. Each path owns its RNG stream, so the result
/// does not depend on scheduling.
pub fn run_paths<F>(cfg: &SimConfig, path: F) -> Result<EmpiricalLaw, Error>
where
    F: Fn(usize) -> Result<EmpiricalLaw, Error> + Sync,
{
    let workers = thread::available_parallelism().map_or(1, |n| n.get());
    run_paths_on(cfg, workers, path)
}

/// [`run_paths`] with an explicit worker count.
pub fn run_paths_on<F>(cfg: &SimConfig, workers: usize, path: F) -> Result<EmpiricalLaw, Error>
where
    F: Fn(usize) -> Result<EmpiricalLaw, Error> + Sync,
{
    cfg.validate()?;
    let workers = workers.clamp(1, cfg.paths);
    let path = &path;
    let mut done: Vec<(usize, Result<EmpiricalLaw, Error>)> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w..cfg.paths)
                        .step_by(workers)
                        .map(|p| (p, path(p)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("simulation worker panicked"))
            .collect()
    });
    done.sort_by_key(|(p, _)| *p);
    let mut iter = done.into_iter().map(|(_, r)| r);
    let mut law = iter.next().ok_or(Error::EmptySample)??;
    for next in iter {
        law.merge(&next?)?;
    }
    Ok(law)
}

pub fn simulate_mmbm_parallel(model: &MmbmModel, cfg: &SimConfig) -> Result<EmpiricalLaw, Error> {
    if cfg.step_too_coarse(model) {
        log::warn!(
            "StepTooCoarse: step {} exceeds recommended {}",
            cfg.step,
            SimConfig::max_recommended_step(model)
        );
    }
    run_paths(cfg, |p| simulate_mmbm_path(model, cfg, p))
}

/// Histogram as densities per bin: `count / (samples * width)`.
pub fn histogram_table(law: &EmpiricalLaw) -> Table {
    let h = law.bin_width();
    let n = law.samples() as f64;
    let mut t = Table::new(phase_header(&["bin_left", "bin_right"], law.phases));
    for k in 0..law.bins {
        let mut r = vec![k as f64 * h, (k + 1) as f64 * h];
        r.extend((0..law.phases).map(|i| law.counts[i * law.bins + k] as f64 / (n * h)));
        t.push(r);
    }
    t
}

pub fn cmd_simulate(model: &MmbmModel, mode: Mode, eps: Option<f64>, sim: &SimArgs, out: &mut OutputDir) -> CmdResult {
    let cfg = sim.config();
    let (law, ks) = match mode {
        Mode::Mmbm => {
            let law = simulate_mmbm_parallel(model, &cfg)?;
            let ks = ks_distance(&law, &stationary_density(model)?)?;
            (law, ks)
        }
        Mode::Fluid => {
            let eps = eps.ok_or_else(|| CliError::input("InvalidConfig", "--mode fluid requires --eps"))?;
            let fluid = build_fluid_approximation(model, eps)?;
            let sol = finite_buffer_solution(&fluid, model.b())?;
            let full = run_paths(&cfg, |p| simulate_fluid_path(&fluid, model.b(), &cfg, p))?;
            let ks = ks_distance(&full, &sol)?;
            (full.collapse()?, ks)
        }
    };
    out.write_csv("histogram.csv", &histogram_table(&law))?;
    let (at0, atb) = law.boundary_fractions();
    let rates = law.local_time_rates().map(|(lo, hi)| json!({ "lower": lo, "upper": hi }));
    let mut config = sim.echo();
    config["mode"] = json!(match mode {
        Mode::Fluid => "fluid",
        Mode::Mmbm => "mmbm",
    });
    if let Some(e) = eps {
        config["eps"] = json!(e);
    }
    out.write_json(
        "summary.json",
        &json!({
            "seed": sim.seed,
            "config": config,
            "samples": law.samples(),
            "n_eff": law.n_eff()?,
            "mean_standard_error": law.mean_standard_error()?,
            "phase_occupancy": law.phase_occupancy(),
            "boundary_fractions": { "at0": at0, "atb": atb },
            "local_time_rates": rates,
            "ks": ks,
            "step_too_coarse": mode == Mode::Mmbm && cfg.step_too_coarse(model),
        }),
    )?;
    Ok(config)
}

/// Level CDF of the oracle, linear within each cell.
pub fn oracle_level_cdf(oracle: &DiscretizedDensity) -> impl Fn(f64) -> f64 + '_ {
    let n = oracle.cells();
    let level: Vec<f64> = (0..n).map(|k| oracle.density.row(k).sum()).collect();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for d in &level {
        cum.push(cum[cum.len() - 1] + d * oracle.h);
    }
    move |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let k = ((x / oracle.h) as usize).min(n - 1);
        cum[k] + level[k] * (x - k as f64 * oracle.h)
    }
}

fn check(name: &str, distance: f64, tolerance: f64) -> Value {
    json!({ "name": name, "distance": distance, "tolerance": tolerance, "pass": distance <= tolerance })
}

pub fn cmd_compare(model: &MmbmModel, cells: usize, sim: &SimArgs, out: &mut OutputDir) -> CmdResult {
    let sol = stationary_density(model)?;
    let tr = cross_check(model)?;

    let oracle = discretization_oracle(model, cells)?;
    let mut dev = 0.0f64;
    for k in 0..oracle.cells() {
        let d = sol.density(oracle.centre(k))?;
        for i in 0..model.phases() {
            dev = dev.max((oracle.density[(k, i)] - d[i]).abs());
        }
    }

    let cfg = sim.config();
    let law = simulate_mmbm_parallel(model, &cfg)?;
    let ks_closed = ks_distance(&law, &sol)?;
    let ks_oracle = ks_distance(&law, &CdfFn { cdf: oracle_level_cdf(&oracle), upper_atom: 0.0 })?;

    let checks = vec![
        check("closed_form_vs_time_reversed", tr, TOL_TIME_REVERSED),
        check("closed_form_vs_oracle", dev, TOL_ORACLE),
        check("closed_form_vs_simulation", ks_closed, TOL_SIMULATION),
        check("oracle_vs_simulation", ks_oracle, TOL_SIMULATION),
    ];
    let all = checks.iter().all(|c| c["pass"] == json!(true));
    out.write_json("report.json", &json!({ "checks": checks, "all_pass": all }))?;
    let mut params = sim.echo();
    params["cells"] = json!(cells);
    Ok(params)
}
