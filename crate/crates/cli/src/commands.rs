//! The experiment subcommands.

use std::path::Path;

use rayon::prelude::*;

use proxflow::matrix::max_abs;
use proxflow::oracles::{exact_cov, exact_mean, kalman_bucy_run, luenberger_run, OdeConfig};
use proxflow::sim::{simulate, InitialState, SimPath};
use proxflow::{error_metrics, propagate, run_filter, StepConfig, UpdateKind};

use crate::config::ExperimentConfig;
use crate::table::{format_float, ResultTable, Row};
use crate::CliError;

/// `err(h_prev) / err(h)` rows for consecutive step sizes, keyed at the finer `h`.
fn ratio_rows(steps: &[f64], seed: Option<u64>, metric: &str, errors: &[f64]) -> Vec<Row> {
    steps
        .windows(2)
        .zip(errors.windows(2))
        .map(|(h, e)| Row::new(Some(h[1]), seed, format!("{metric}_ratio"), e[0] / e[1]))
        .collect()
}

/// Terminal mean and covariance errors of the JKO recursion against the exact
/// solution, one row pair per step size plus halving ratios.
pub fn converge_propagation(cfg: &ExperimentConfig) -> Result<ResultTable, CliError> {
    let sys = &cfg.system;
    let g0 = &cfg.initial;
    let ode = OdeConfig::new(cfg.finest_step() / 20.0, 1e-10)?;
    let mean_ref = exact_mean(sys, g0.mean(), cfg.horizon)?;
    let cov_ref = exact_cov(sys, g0.cov(), cfg.horizon, &ode)?;

    let errors = cfg
        .steps
        .par_iter()
        .map(|&h| {
            let step = StepConfig::for_horizon(h, cfg.horizon, None)?;
            let path = propagate(sys, g0, &step, cfg.mode)?;
            let (_, last) = path.last().expect("path holds the initial density");
            Ok(((last.mean() - &mean_ref).amax(), max_abs(&(last.cov().matrix() - cov_ref.matrix()))))
        })
        .collect::<Result<Vec<(f64, f64)>, CliError>>()?;

    let mut table = ResultTable::new(&cfg.hash);
    for (&h, &(mean_err, cov_err)) in cfg.steps.iter().zip(&errors) {
        table.push(Row::new(Some(h), None, "mean_error", mean_err));
        table.push(Row::new(Some(h), None, "cov_error", cov_err));
    }
    let (mean_errs, cov_errs): (Vec<f64>, Vec<f64>) = errors.into_iter().unzip();
    table.extend(ratio_rows(&cfg.steps, None, "mean_error", &mean_errs));
    table.extend(ratio_rows(&cfg.steps, None, "cov_error", &cov_errs));
    Ok(table)
}

/// Grid shared by every step size: the master step and the coarsening factor
/// for each configured `h`.
struct MasterGrid {
    h: f64,
    steps: usize,
    factors: Vec<usize>,
}

fn master_grid(cfg: &ExperimentConfig) -> Result<MasterGrid, CliError> {
    let h = cfg.finest_step() / cfg.master_substeps as f64;
    let steps = StepConfig::for_horizon(h, cfg.horizon, None)?.steps;
    let factors = cfg
        .steps
        .iter()
        .map(|&step| {
            let ratio = step / h;
            let factor = ratio.round();
            if factor < 1.0 || (ratio - factor).abs() > 1e-6 * ratio {
                return Err(CliError::Validation(format!(
                    "run.h: step {step} is not an integer multiple of the master step {h}"
                )));
            }
            Ok(factor as usize)
        })
        .collect::<Result<Vec<usize>, CliError>>()?;
    Ok(MasterGrid { h, steps, factors })
}

fn master_path(cfg: &ExperimentConfig, grid: &MasterGrid, seed: u64) -> Result<SimPath, CliError> {
    let meas = cfg.require_measurement()?;
    let step = StepConfig::new(grid.h, grid.steps, None)?;
    let path = simulate(&cfg.system, meas, &InitialState::Sample(cfg.initial.clone()), &step, seed)?;
    if let Some(dir) = &cfg.output.paths {
        write_path_csv(&dir.join(format!("path_seed{seed}.csv")), &path)?;
    }
    Ok(path)
}

/// Writes `k,t,x1..xn,dz1..dzm`; the increment columns are empty on the last row.
pub fn write_path_csv(file: &Path, path: &SimPath) -> Result<(), CliError> {
    if let Some(parent) = file.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let n = path.states.first().map_or(0, |x| x.len());
    let m = path.increments.first().map_or(0, |d| d.len());
    let mut w = csv::Writer::from_path(file)?;
    let mut header = vec!["k".to_string(), "t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("dz{i}")));
    w.write_record(&header)?;
    for (k, x) in path.states.iter().enumerate() {
        let mut record = vec![k.to_string(), format_float(k as f64 * path.h)];
        record.extend(x.iter().copied().map(format_float));
        match path.increments.get(k) {
            Some(dz) => record.extend(dz.iter().copied().map(format_float)),
            None => record.extend(std::iter::repeat_n(String::new(), m)),
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Filter against its continuous-time limit on one simulated realization per
/// seed. Every step size sees the same Brownian path: coarse increments are
/// exact sums of the master increments.
pub fn converge_filter(cfg: &ExperimentConfig) -> Result<ResultTable, CliError> {
    let meas = cfg.require_measurement()?;
    let seeds = cfg.require_seeds()?;
    let grid = master_grid(cfg)?;
    let ode = OdeConfig::for_step(grid.h)?;

    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let path = master_path(cfg, &grid, seed)?;
            let reference = match cfg.update {
                UpdateKind::Lmmr => kalman_bucy_run(&cfg.system, meas, &cfg.initial, &path.increments, grid.h, &ode)?,
                UpdateKind::Wasserstein => {
                    luenberger_run(&cfg.system, meas, &cfg.initial, &path.increments, grid.h, &ode)?
                }
            };
            let errors = cfg
                .steps
                .par_iter()
                .zip(&grid.factors)
                .map(|(&h, &factor)| {
                    let coarse = path.coarsen(factor)?;
                    let step = StepConfig::for_horizon(h, cfg.horizon, None)?;
                    let run = run_filter(
                        &cfg.system,
                        meas,
                        &cfg.initial,
                        &coarse.increments,
                        &step,
                        cfg.update,
                        cfg.predict,
                    )?;
                    let sq: f64 = run
                        .posterior
                        .iter()
                        .enumerate()
                        .map(|(k, g)| (g.mean() - reference[k * factor].mean()).norm_squared())
                        .sum();
                    let mean_err = (sq / run.posterior.len() as f64).sqrt();
                    let terminal = run.terminal().cov();
                    let cov_err = max_abs(&(terminal.matrix() - reference[grid.steps].cov().matrix()));
                    Ok((mean_err, cov_err, terminal.trace()))
                })
                .collect::<Result<Vec<(f64, f64, f64)>, CliError>>()?;
            Ok((seed, errors))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut table = ResultTable::new(&cfg.hash);
    for (seed, errors) in per_seed {
        for (&h, &(mean_err, cov_err, trace)) in cfg.steps.iter().zip(&errors) {
            table.push(Row::new(Some(h), Some(seed), "mean_error", mean_err));
            table.push(Row::new(Some(h), Some(seed), "cov_error", cov_err));
            table.push(Row::new(Some(h), Some(seed), "terminal_cov_trace", trace));
        }
        let mean_errs: Vec<f64> = errors.iter().map(|e| e.0).collect();
        let cov_errs: Vec<f64> = errors.iter().map(|e| e.1).collect();
        table.extend(ratio_rows(&cfg.steps, Some(seed), "mean_error", &mean_errs));
        table.extend(ratio_rows(&cfg.steps, Some(seed), "cov_error", &cov_errs));
    }
    Ok(table)
}

fn update_name(kind: UpdateKind) -> &'static str {
    match kind {
        UpdateKind::Lmmr => "lmmr",
        UpdateKind::Wasserstein => "wasserstein",
    }
}

/// Monte Carlo comparison of both updates against the simulated truth:
/// path RMSE per seed, the terminal covariance trace each filter reports, and
/// for more than one seed the RMSE pooled over seeds.
pub fn compare_filters(cfg: &ExperimentConfig) -> Result<ResultTable, CliError> {
    let meas = cfg.require_measurement()?;
    let seeds = cfg.require_seeds()?;
    let grid = master_grid(cfg)?;
    let kinds = [UpdateKind::Lmmr, UpdateKind::Wasserstein];

    let cells = seeds
        .par_iter()
        .map(|&seed| {
            let path = master_path(cfg, &grid, seed)?;
            let mut rows = Vec::new();
            for (&h, &factor) in cfg.steps.iter().zip(&grid.factors) {
                let coarse = path.coarsen(factor)?;
                let step = StepConfig::for_horizon(h, cfg.horizon, None)?;
                for kind in kinds {
                    let run =
                        run_filter(&cfg.system, meas, &cfg.initial, &coarse.increments, &step, kind, cfg.predict)?;
                    let metrics = error_metrics(&run, &coarse.states)?;
                    let name = update_name(kind);
                    rows.push(Row::new(Some(h), Some(seed), format!("{name}_rmse"), metrics.rmse));
                    rows.push(Row::new(
                        Some(h),
                        Some(seed),
                        format!("{name}_steady_cov"),
                        run.terminal().cov().trace(),
                    ));
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<Vec<Row>>, CliError>>()?;

    let mut table = ResultTable::new(&cfg.hash);
    let rows: Vec<Row> = cells.into_iter().flatten().collect();
    if seeds.len() > 1 {
        for &h in &cfg.steps {
            for kind in kinds {
                let metric = format!("{}_rmse", update_name(kind));
                let values: Vec<f64> =
                    rows.iter().filter(|r| r.h == Some(h) && r.metric == metric).map(|r| r.value * r.value).collect();
                let pooled = (values.iter().sum::<f64>() / values.len() as f64).sqrt();
                table.push(Row::new(Some(h), None, metric, pooled));
            }
        }
    }
    table.extend(rows);
    Ok(table)
}
