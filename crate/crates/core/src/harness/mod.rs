//! Experiment runner: feature-count by iteration sweeps, learning-rate fits
//! and the numerical verification suite, all writing CSV.
//!
//! Every random draw is seeded from a stable hash of the base seed and the
//! cell coordinates, so results do not depend on scheduling or thread count.

pub mod config;
pub mod rates;
pub mod records;
pub mod sweep;
pub mod verify;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RfsError};
use crate::featuremaps::{Activation, FeatureMap, FeatureMatrix, FeatureSpec, NtkParams};
use crate::ingest::{self, ClassMapping, CsvOptions, Dataset, LabelColumn, Standardizer, Task};
use crate::synth::{build_model, sample_synthetic, SyntheticModel};

pub use config::{ConfigMap, DataSpec, ExperimentConfig, ExperimentKind, FeatureChoice, SolverChoice};
pub use rates::{run_rates, RatesOutput, SlopeSummary};
pub use records::{AggregateRow, DetailRow, MeanStderr};
pub use sweep::{run_sweep, SweepOutput};
pub use verify::{run_verify, VerifyReport, VerifyRow};

/// Seed derivation. `T` never enters a seed: one trajectory serves every stopping time.
pub mod seeds {
    use crate::seed::stable_hash;

    const MODEL: u64 = 0x006d_6f64_656c;
    const DATA: u64 = 0x6461_7461;
    const TEST: u64 = 0x7465_7374;
    const FEATURES: u64 = 0x6665_6174;
    const SPLIT: u64 = 0x0073_706c_6974;
    const TABLE: u64 = 0x0074_6162_6c65;

    /// Synthetic model, fixed for a whole experiment.
    pub fn model(base: u64) -> u64 {
        stable_hash(&[base, MODEL])
    }

    /// Training sample; shared by every feature count of a repetition.
    pub fn data(base: u64, rep: usize, n: usize) -> u64 {
        stable_hash(&[base, DATA, rep as u64, n as u64])
    }

    pub fn test(base: u64, rep: usize, n: usize) -> u64 {
        stable_hash(&[base, TEST, rep as u64, n as u64])
    }

    pub fn features(base: u64, rep: usize, m: usize, n: usize) -> u64 {
        stable_hash(&[base, FEATURES, rep as u64, m as u64, n as u64])
    }

    pub fn split(base: u64, rep: usize) -> u64 {
        stable_hash(&[base, SPLIT, rep as u64])
    }

    /// Generated tables such as the two-blob stand-in.
    pub fn table(base: u64) -> u64 {
        stable_hash(&[base, TABLE])
    }
}

/// Training and test data for one repetition.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset<f64>,
    pub test: Option<Dataset<f64>>,
}

/// Data shared by all repetitions of an experiment.
#[derive(Debug, Clone)]
pub enum BaseData {
    Synthetic(SyntheticModel<f64>),
    Table(Dataset<f64>),
}

impl BaseData {
    pub fn load(config: &ExperimentConfig, n_max: usize) -> Result<Self> {
        match &config.data {
            DataSpec::Synthetic { b, r, source_norm, noise, .. } => {
                let j = config.data.synthetic_frequencies(n_max).unwrap_or(1);
                Ok(BaseData::Synthetic(build_model(j, *b, *r, *source_norm, *noise, seeds::model(config.base_seed))?))
            }
            DataSpec::Csv { path, label, limit, classes, .. } => {
                let label = match label.as_str() {
                    "last" => LabelColumn::Last,
                    s => match s.parse::<usize>() {
                        Ok(i) => LabelColumn::Index(i),
                        Err(_) => LabelColumn::Name(s.to_string()),
                    },
                };
                let options = CsvOptions {
                    label,
                    limit: *limit,
                    class_mapping: classes.map(|(negative, positive)| ClassMapping { negative, positive }),
                    ..Default::default()
                };
                let table = ingest::load_csv(path, &options).map_err(|e| match e {
                    RfsError::Io(io) => RfsError::Config(format!("cannot read data file '{}': {io}", path.display())),
                    other => other,
                })?;
                Ok(BaseData::Table(table))
            }
            DataSpec::Blobs { n, d, separation, .. } => {
                Ok(BaseData::Table(ingest::two_blobs(*n, *d, *separation, seeds::table(config.base_seed))?))
            }
        }
    }

    pub fn model(&self) -> Option<&SyntheticModel<f64>> {
        match self {
            BaseData::Synthetic(m) => Some(m),
            BaseData::Table(_) => None,
        }
    }

    /// Data of repetition `rep`: fresh samples for synthetic models, a seeded
    /// split standardized with training statistics for tables.
    pub fn prepare(&self, config: &ExperimentConfig, rep: usize, n: usize) -> Result<Prepared> {
        match (self, &config.data) {
            (BaseData::Synthetic(model), DataSpec::Synthetic { n_test, .. }) => {
                let train = sample_synthetic(model, n, seeds::data(config.base_seed, rep, n))?;
                let test = if *n_test > 0 {
                    Some(sample_synthetic(model, *n_test, seeds::test(config.base_seed, rep, n))?)
                } else {
                    None
                };
                Ok(Prepared { train, test })
            }
            (
                BaseData::Table(table),
                DataSpec::Csv { train_fraction, standardize, .. } | DataSpec::Blobs { train_fraction, standardize, .. },
            ) => {
                let (train, test) = ingest::split(table, *train_fraction, seeds::split(config.base_seed, rep))?;
                if *standardize && train.n() >= 2 {
                    let st = Standardizer::fit(&train)?;
                    Ok(Prepared { train: st.apply(&train)?, test: Some(st.apply(&test)?) })
                } else {
                    Ok(Prepared { train, test: Some(test) })
                }
            }
            _ => Err(RfsError::Config("data specification does not match the loaded data".into())),
        }
    }
}

/// Largest row norm, used to certify the NTK `kappa^2` bound.
pub fn input_radius(sets: &[&DMatrix<f64>]) -> f64 {
    let r = sets.iter().flat_map(|x| x.row_iter().map(|row| row.norm())).fold(0.0f64, f64::max);
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

/// Samples the configured feature family.
pub fn build_feature_map(
    settings: &config::FeatureSettings,
    d: usize,
    m: usize,
    seed: u64,
    model: Option<&SyntheticModel<f64>>,
    radius: f64,
) -> Result<FeatureMap<f64>> {
    let ntk = |activation| {
        FeatureSpec::Ntk(NtkParams { activation, tau: settings.tau, gamma: settings.gamma, input_radius: radius })
    };
    match settings.kind {
        FeatureChoice::GaussianRff => {
            FeatureMap::sample(FeatureSpec::GaussianRff { bandwidth: settings.bandwidth }, d, m, seed)
        }
        FeatureChoice::NtkSigmoid => FeatureMap::sample(ntk(Activation::Sigmoid), d, m, seed),
        FeatureChoice::NtkRelu => FeatureMap::sample(ntk(Activation::Relu), d, m, seed),
        FeatureChoice::ModelFourier => {
            let model = model.ok_or_else(|| RfsError::Config("model-fourier features need synthetic data".into()))?;
            let map = model.model_features(m, seed)?;
            Ok(if settings.merge { map.merge_duplicates() } else { map })
        }
    }
}

/// Step size: explicit, or `step_scale / kappa^2`.
pub fn step_size(settings: &config::FilterSettings, kappa_sq: f64) -> f64 {
    settings.alpha.unwrap_or(settings.step_scale / kappa_sq)
}

/// Error metrics of one parameter vector.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub train_mse: f64,
    pub test_mse: Option<f64>,
    pub zero_one: Option<f64>,
    pub l2_analytic: Option<f64>,
}

/// Feature matrices and targets of one cell, plus what is needed for analytic errors.
pub struct Evaluator<'a> {
    pub phi_train: &'a FeatureMatrix<f64>,
    pub y_train: &'a DVector<f64>,
    pub test: Option<(&'a FeatureMatrix<f64>, &'a DVector<f64>)>,
    pub task: Task,
    pub analytic: Option<(&'a SyntheticModel<f64>, &'a FeatureMap<f64>)>,
}

fn mse(pred: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (pred - y).norm_squared() / y.len() as f64
}

/// Fraction of sign disagreements; a zero prediction counts as `+1`.
pub fn zero_one_error(pred: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let wrong = pred.iter().zip(y.iter()).filter(|(&p, &t)| (if p >= 0.0 { 1.0 } else { -1.0 }) != t).count();
    wrong as f64 / y.len() as f64
}

impl Evaluator<'_> {
    pub fn evaluate(&self, theta: &DVector<f64>) -> Result<Metrics> {
        let train_pred = self.phi_train.values() * theta;
        let mut out = Metrics { train_mse: mse(&train_pred, self.y_train), ..Default::default() };
        let classification = self.task == Task::Classification;
        match self.test {
            Some((phi, y)) => {
                let pred = phi.values() * theta;
                out.test_mse = Some(mse(&pred, y));
                if classification {
                    out.zero_one = Some(zero_one_error(&pred, y));
                }
            }
            None if classification => out.zero_one = Some(zero_one_error(&train_pred, self.y_train)),
            None => {}
        }
        if let Some((model, map)) = self.analytic {
            out.l2_analytic = Some(model.l2_error_of(map, theta)?);
        }
        Ok(out)
    }
}

/// Runs `f` on a dedicated pool; `threads == 0` uses every core.
pub fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RfsError::Config(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// What a run wrote and whether it passed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    /// Cells whose fit failed (recorded with empty metrics).
    pub failed_cells: usize,
    /// Gated verification checks that failed.
    pub gated_failures: usize,
    pub lines: Vec<String>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Runs the configured experiment and writes its CSV files.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    match config.kind {
        ExperimentKind::Sweep => {
            let out = run_sweep(config)?;
            let aggregate_path = config.companion_path("aggregate");
            records::write_detail(&out.detail, create(&config.output)?)?;
            records::write_aggregate(&out.aggregate, create(&aggregate_path)?)?;
            let mut lines = vec![format!("{} detail rows, {} aggregate rows", out.detail.len(), out.aggregate.len())];
            lines.extend(out.failures.iter().map(|f| format!("failed cell rep={} M={}: {}", f.rep, f.m, f.message)));
            Ok(RunSummary {
                files: vec![config.output.clone(), aggregate_path],
                failed_cells: out.failures.len(),
                gated_failures: 0,
                lines,
            })
        }
        ExperimentKind::Rates => {
            let out = run_rates(config)?;
            let aggregate_path = config.companion_path("aggregate");
            let slope_path = config.companion_path("slope");
            records::write_detail(&out.detail, create(&config.output)?)?;
            records::write_aggregate(&out.aggregate, create(&aggregate_path)?)?;
            out.slope.write_csv(create(&slope_path)?)?;
            let s = &out.slope;
            let mut lines = vec![
                format!(
                    "error slope {:.4} +/- {:.4} (theory {:.4})",
                    s.error.slope, s.error.slope_stderr, s.theory_error_slope
                ),
                format!(
                    "squared-error slope {:.4} +/- {:.4} (theory {:.4})",
                    s.squared.slope,
                    s.squared.slope_stderr,
                    2.0 * s.theory_error_slope
                ),
            ];
            lines.extend(out.failures.iter().map(|f| format!("failed cell rep={} n={}: {}", f.rep, f.n, f.message)));
            Ok(RunSummary {
                files: vec![config.output.clone(), aggregate_path, slope_path],
                failed_cells: out.failures.len(),
                gated_failures: 0,
                lines,
            })
        }
        ExperimentKind::Verify => {
            let report = run_verify(config)?;
            report.write_csv(create(&config.output)?)?;
            let failed = report.gated_failures();
            let lines = report
                .rows
                .iter()
                .filter(|r| r.gated && r.pass == Some(false))
                .map(|r| {
                    format!(
                        "FAIL {} {} {}: {} (bound {})",
                        r.check,
                        r.subject,
                        r.parameter,
                        r.value,
                        r.bound.map(|b| b.to_string()).unwrap_or_default()
                    )
                })
                .chain(std::iter::once(format!("{} rows, {} gated failures", report.rows.len(), failed)))
                .collect();
            Ok(RunSummary { files: vec![config.output.clone()], failed_cells: 0, gated_failures: failed, lines })
        }
    }
}
