//! Test error over a grid of feature counts `M` and stopping times `T`.
//!
//! One fit per `(rep, M)`: iterative methods run a single trajectory up to the
//! largest `T` and are read off at every grid value on the way.

use std::time::Instant;

use rayon::prelude::*;

use super::config::{ExperimentConfig, SolverChoice};
use super::records::{aggregate, AggregateRow, DetailRow};
use super::{build_feature_map, in_pool, input_radius, seeds, step_size, BaseData, Evaluator, Prepared};
use crate::error::Result;
use crate::estimators::{FeatureSpectralSolver, IterationMode, IterativeFit};
use crate::featuremaps::FeatureKind;
use crate::filters::{FilterMethod, FilterSpec};
use crate::harness::config::DataSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub rep: usize,
    pub m: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    /// Ordered by repetition, then `M`, then `T`.
    pub detail: Vec<DetailRow>,
    pub aggregate: Vec<AggregateRow>,
    pub failures: Vec<CellFailure>,
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    let n_hint = match config.data {
        DataSpec::Synthetic { n, .. } => n,
        _ => 0,
    };
    let base = BaseData::load(config, n_hint)?;
    let prepared: Vec<Prepared> =
        (0..config.repetitions).map(|rep| base.prepare(config, rep, n_hint)).collect::<Result<_>>()?;
    let (n, d) = (prepared[0].train.n(), prepared[0].train.d());
    let m_values = config.m_values(n, d);
    let mut t_values = config.grids.t_list.clone();
    t_values.sort_unstable();
    t_values.dedup();

    let items: Vec<(usize, usize)> =
        (0..config.repetitions).flat_map(|rep| m_values.iter().map(move |&m| (rep, m))).collect();
    let results: Vec<(Vec<DetailRow>, Option<CellFailure>)> = in_pool(config.threads, || {
        items.par_iter().map(|&(rep, m)| sweep_cell(config, &base, &prepared[rep], rep, m, &t_values)).collect()
    })?;
    let mut detail = Vec::with_capacity(items.len() * t_values.len());
    let mut failures = Vec::new();
    for (rows, failure) in results {
        detail.extend(rows);
        failures.extend(failure);
    }
    let aggregate = aggregate(&detail);
    Ok(SweepOutput { detail, aggregate, failures })
}

fn sweep_cell(
    config: &ExperimentConfig,
    base: &BaseData,
    data: &Prepared,
    rep: usize,
    m: usize,
    t_values: &[usize],
) -> (Vec<DetailRow>, Option<CellFailure>) {
    let start = Instant::now();
    let (n, d) = (data.train.n(), data.train.d());
    let method = config.filter.method;
    let mut rows: Vec<DetailRow> = t_values
        .iter()
        .map(|&t| {
            let tf = t as f64;
            DetailRow {
                experiment_id: config.experiment_id.clone(),
                n,
                d,
                m,
                t,
                rep,
                lambda: if method.lambda_is_inverse_square() { 1.0 / (tf * tf) } else { 1.0 / tf },
                alpha: None,
                beta: (method == FilterMethod::HeavyBall).then_some(config.filter.beta),
                train_mse: None,
                test_mse: None,
                zero_one: None,
                l2_analytic: None,
                wall_ms: None,
            }
        })
        .collect();

    let outcome = (|| -> Result<()> {
        let mut sets = vec![&data.train.x];
        if let Some(t) = &data.test {
            sets.push(&t.x);
        }
        let map = build_feature_map(
            &config.features,
            d,
            m,
            seeds::features(config.base_seed, rep, m, n),
            base.model(),
            input_radius(&sets),
        )?;
        let phi_train = map.apply_features(&data.train.x)?;
        let phi_test = data.test.as_ref().map(|t| map.apply_features(&t.x)).transpose()?;
        let analytic = match (base.model(), map.kind()) {
            (Some(model), FeatureKind::ModelFourier) => Some((model, &map)),
            _ => None,
        };
        let eval = Evaluator {
            phi_train: &phi_train,
            y_train: &data.train.y,
            test: phi_test.as_ref().zip(data.test.as_ref().map(|t| &t.y)),
            task: data.train.task,
            analytic,
        };
        let kappa_sq = map.kappa_sq();
        let record = |row: &mut DetailRow, theta: &nalgebra::DVector<f64>| -> Result<()> {
            let metrics = eval.evaluate(theta)?;
            row.train_mse = Some(metrics.train_mse);
            row.test_mse = metrics.test_mse;
            row.zero_one = metrics.zero_one;
            row.l2_analytic = metrics.l2_analytic;
            if config.timing {
                row.wall_ms = Some((start.elapsed().as_secs_f64() * 1e6).round() / 1e3);
            }
            Ok(())
        };

        if method == FilterMethod::Tikhonov {
            let solver = FeatureSpectralSolver::new(&phi_train, &data.train.y)?;
            for row in rows.iter_mut() {
                let theta = solver.theta(&FilterSpec::tikhonov(row.lambda)?);
                record(row, &theta)?;
            }
            return Ok(());
        }

        let alpha = step_size(&config.filter, kappa_sq);
        let t_max = *t_values.last().unwrap_or(&1);
        let filter = FilterSpec::iterative_on(method, alpha, config.filter.beta, t_max, kappa_sq)?;
        for row in rows.iter_mut() {
            row.alpha = Some(alpha);
        }
        if config.filter.solver == SolverChoice::Spectral {
            let solver = FeatureSpectralSolver::new(&phi_train, &data.train.y)?;
            for row in rows.iter_mut() {
                let theta = solver.theta(&filter.with_iterations(row.t)?);
                record(row, &theta)?;
            }
        } else {
            let mut fit = IterativeFit::new(&phi_train, &data.train.y, filter, IterationMode::Auto)?;
            for row in rows.iter_mut() {
                fit.run_to(row.t)?;
                record(row, &fit.theta())?;
            }
        }
        Ok(())
    })();

    let failure = outcome.err().map(|e| CellFailure { rep, m, message: e.to_string() });
    (rows, failure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ConfigMap, ExperimentKind};

    fn config(extra: &str) -> ExperimentConfig {
        let text = format!(
            "[experiment]\nseed = 3\nrepetitions = 2\ntiming = false\n[data]\nn = 60\nn_test = 40\nfrequencies = 20\nnoise = 0.1\n[features]\nkind = rff\nbandwidth = 0.5\n[grid]\nm = 4,8,16\nt = 1,2,4,8\n{extra}"
        );
        ExperimentConfig::from_map(&ConfigMap::parse(&text).unwrap(), Some(ExperimentKind::Sweep)).unwrap()
    }

    #[test]
    fn grid_cardinality() {
        let out = run_sweep(&config("")).unwrap();
        assert_eq!(out.detail.len(), 24);
        assert_eq!(out.aggregate.len(), 12);
        assert!(out.failures.is_empty());
        assert!(out.detail.iter().all(|r| r.train_mse.is_some() && r.test_mse.is_some() && r.zero_one.is_none()));
    }

    #[test]
    fn training_error_decreases_along_trajectory() {
        let out = run_sweep(&config("")).unwrap();
        for chunk in out.detail.chunks(4) {
            let errs: Vec<f64> = chunk.iter().map(|r| r.train_mse.unwrap()).collect();
            assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{errs:?}");
        }
    }

    #[test]
    fn spectral_and_iterative_solvers_agree() {
        let a = run_sweep(&config("[filter]\nmethod = heavy-ball\nbeta = 0.3")).unwrap();
        let b = run_sweep(&config("[filter]\nmethod = heavy-ball\nbeta = 0.3\nsolver = spectral")).unwrap();
        for (x, y) in a.detail.iter().zip(&b.detail) {
            assert!((x.test_mse.unwrap() - y.test_mse.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn model_fourier_reports_analytic_error() {
        let out = run_sweep(&config("[features]\nkind = model-fourier")).unwrap();
        assert!(out.detail.iter().all(|r| r.l2_analytic.is_some()));
    }

    #[test]
    fn classification_reports_zero_one() {
        let out = run_sweep(&config(
            "[data]\nsource = blobs\nn = 80\nd = 3\n[features]\nkind = ntk\n[filter]\nmethod = tikhonov",
        ))
        .unwrap();
        assert!(out.failures.is_empty());
        assert!(out.detail.iter().all(|r| r.zero_one.is_some() && r.alpha.is_none()));
        assert_eq!(out.detail[0].n, 40);
    }

    #[test]
    fn divergent_cells_are_recorded() {
        let out = run_sweep(&config("[filter]\nalpha = 0.9\n")).unwrap();
        // alpha * kappa^2 = 1.8 is inadmissible, every cell fails and stays empty
        assert_eq!(out.failures.len(), 6);
        assert!(out.detail.iter().all(|r| r.train_mse.is_none()));
        assert_eq!(out.detail.len(), 24);
    }
}
