//! Learning curves under the theoretical schedule and their log-log slopes.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{DataSpec, ExperimentConfig, SolverChoice};
use super::records::{aggregate, AggregateRow, DetailRow};
use super::{build_feature_map, in_pool, input_radius, seeds, step_size, BaseData, Evaluator};
use crate::error::{Result, RfsError};
use crate::estimators::{FeatureSpectralSolver, IterationMode, IterativeFit};
use crate::filters::{FilterMethod, FilterSpec};
use crate::spectrum::{fit_line, theory_schedule, LineFit, Schedule, TheoryParams};

#[derive(Debug, Clone, PartialEq)]
pub struct RateFailure {
    pub rep: usize,
    pub n: usize,
    pub message: String,
}

/// Log-log fits of the mean analytic error against `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeSummary {
    pub method: FilterMethod,
    pub r: f64,
    pub b: f64,
    pub n_values: Vec<usize>,
    /// Mean over repetitions of `|g - f|`.
    pub mean_error: Vec<f64>,
    /// Mean over repetitions of `|g - f|^2`.
    pub mean_squared_error: Vec<f64>,
    pub error: LineFit,
    pub squared: LineFit,
    /// `-r / (2r + b)`.
    pub theory_error_slope: f64,
}

impl SlopeSummary {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["quantity", "method", "r", "b", "points", "slope", "stderr", "theory", "deviation"])?;
        for (name, fit, theory) in [
            ("l2_error", &self.error, self.theory_error_slope),
            ("l2_error_sq", &self.squared, 2.0 * self.theory_error_slope),
        ] {
            w.write_record([
                name.to_string(),
                self.method.name().to_string(),
                self.r.to_string(),
                self.b.to_string(),
                fit.points.to_string(),
                fit.slope.to_string(),
                fit.slope_stderr.to_string(),
                theory.to_string(),
                (fit.slope - theory).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatesOutput {
    pub detail: Vec<DetailRow>,
    pub aggregate: Vec<AggregateRow>,
    pub schedules: Vec<Schedule<f64>>,
    pub slope: SlopeSummary,
    pub failures: Vec<RateFailure>,
}

/// Spectral fits pay one `D^3` decomposition; stepping pays `k D^2`.
fn use_spectral(choice: SolverChoice, method: FilterMethod, k: usize, columns: usize) -> bool {
    match choice {
        SolverChoice::Spectral => true,
        SolverChoice::Iterative => method == FilterMethod::Tikhonov,
        SolverChoice::Auto => method == FilterMethod::Tikhonov || k > 10 * columns,
    }
}

pub fn run_rates(config: &ExperimentConfig) -> Result<RatesOutput> {
    let DataSpec::Synthetic { r, b, source_norm, .. } = config.data else {
        return Err(RfsError::Config("rates experiments need synthetic data".into()));
    };
    let mut n_values = config.grids.n_list.clone();
    n_values.sort_unstable();
    n_values.dedup();
    let n_max = *n_values.last().ok_or_else(|| RfsError::Config("grid.n is empty".into()))?;
    let base = BaseData::load(config, n_max)?;
    let model = base.model().ok_or_else(|| RfsError::Config("rates experiments need synthetic data".into()))?;
    let params = TheoryParams {
        r,
        b,
        source_norm,
        c_b: model.capacity_constant(1e-3, 1.0)?,
        c_lambda: config.theory.c_lambda,
        c_m: config.theory.c_m,
        delta: config.theory.delta,
    };
    let schedules: Vec<Schedule<f64>> = n_values.iter().map(|&n| theory_schedule(n, &params)).collect::<Result<_>>()?;

    let items: Vec<(usize, usize)> =
        (0..schedules.len()).flat_map(|i| (0..config.repetitions).map(move |rep| (i, rep))).collect();
    let results: Vec<(DetailRow, Option<RateFailure>)> = in_pool(config.threads, || {
        items.par_iter().map(|&(i, rep)| rate_cell(config, &base, &schedules[i], rep)).collect()
    })?;
    let mut detail = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (row, failure) in results {
        detail.push(row);
        failures.extend(failure);
    }

    let mut mean_error = Vec::new();
    let mut mean_squared_error = Vec::new();
    let mut xs = Vec::new();
    for &n in &n_values {
        let errs: Vec<f64> = detail.iter().filter(|r| r.n == n).filter_map(|r| r.l2_analytic).collect();
        if errs.is_empty() {
            return Err(RfsError::InvalidParameter(format!("every repetition failed at n = {n}")));
        }
        let k = errs.len() as f64;
        mean_error.push(errs.iter().sum::<f64>() / k);
        mean_squared_error.push(errs.iter().map(|e| e * e).sum::<f64>() / k);
        xs.push((n as f64).ln());
    }
    let log = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<_>>();
    let slope = SlopeSummary {
        method: config.filter.method,
        r,
        b,
        n_values: n_values.clone(),
        error: fit_line(&xs, &log(&mean_error))?,
        squared: fit_line(&xs, &log(&mean_squared_error))?,
        mean_error,
        mean_squared_error,
        theory_error_slope: params.error_slope(),
    };
    let aggregate = aggregate(&detail);
    Ok(RatesOutput { detail, aggregate, schedules, slope, failures })
}

fn rate_cell(
    config: &ExperimentConfig,
    base: &BaseData,
    schedule: &Schedule<f64>,
    rep: usize,
) -> (DetailRow, Option<RateFailure>) {
    let start = Instant::now();
    let method = config.filter.method;
    let n = schedule.n;
    let k = schedule.iterations_for(method);
    let mut row = DetailRow {
        experiment_id: config.experiment_id.clone(),
        n,
        d: 1,
        m: schedule.features,
        t: k,
        rep,
        lambda: schedule.lambda,
        alpha: None,
        beta: (method == FilterMethod::HeavyBall).then_some(config.filter.beta),
        train_mse: None,
        test_mse: None,
        zero_one: None,
        l2_analytic: None,
        wall_ms: None,
    };
    let outcome = (|| -> Result<()> {
        let data = base.prepare(config, rep, n)?;
        let map = build_feature_map(
            &config.features,
            1,
            schedule.features,
            seeds::features(config.base_seed, rep, schedule.features, n),
            base.model(),
            input_radius(&[&data.train.x]),
        )?;
        let phi_train = map.apply_features(&data.train.x)?;
        let phi_test = data.test.as_ref().map(|t| map.apply_features(&t.x)).transpose()?;
        let filter = if method == FilterMethod::Tikhonov {
            FilterSpec::tikhonov(schedule.lambda)?
        } else {
            let alpha = step_size(&config.filter, map.kappa_sq());
            row.alpha = Some(alpha);
            FilterSpec::iterative_on(method, alpha, config.filter.beta, k, map.kappa_sq())?
        };
        let theta = if use_spectral(config.filter.solver, method, k, map.output_dim()) {
            FeatureSpectralSolver::new(&phi_train, &data.train.y)?.theta(&filter)
        } else {
            let mut fit = IterativeFit::new(&phi_train, &data.train.y, filter, IterationMode::Auto)?;
            fit.run_to(k)?;
            fit.theta()
        };
        let eval = Evaluator {
            phi_train: &phi_train,
            y_train: &data.train.y,
            test: phi_test.as_ref().zip(data.test.as_ref().map(|t| &t.y)),
            task: data.train.task,
            analytic: base.model().map(|m| (m, &map)),
        };
        let metrics = eval.evaluate(&theta)?;
        row.train_mse = Some(metrics.train_mse);
        row.test_mse = metrics.test_mse;
        row.l2_analytic = metrics.l2_analytic;
        Ok(())
    })();
    if config.timing {
        row.wall_ms = Some((start.elapsed().as_secs_f64() * 1e6).round() / 1e3);
    }
    let failure = outcome.err().map(|e| RateFailure { rep, n, message: e.to_string() });
    (row, failure)
}
