//! Experiment configuration: `key = value` lines under `[section]` headers.
//!
//! Every key is addressable from the command line as `section.key=value`;
//! command-line values override the file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Result, RfsError};
use crate::filters::FilterMethod;
use crate::synth::default_frequency_count;

/// Flat `section.key -> value` map, keys lowercased.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| RfsError::Parse { line: line_no, message: "unterminated section header".into() })?
                    .trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(RfsError::Parse { line: line_no, message: format!("bad section name '{name}'") });
                }
                section = name.to_ascii_lowercase();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| RfsError::Parse { line: line_no, message: "expected 'key = value'".into() })?;
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(RfsError::Parse { line: line_no, message: "empty key".into() });
            }
            let full = if section.is_empty() { key } else { format!("{section}.{key}") };
            entries.insert(full, value.trim().to_string());
        }
        Ok(ConfigMap { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RfsError::Config(format!("cannot read config '{}': {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.trim().to_ascii_lowercase(), value.trim().to_string());
    }

    /// Applies a `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| RfsError::Config(format!("override '{assignment}' is not of the form section.key=value")))?;
        if !key.contains('.') {
            return Err(RfsError::Config(format!("override key '{key}' needs a section prefix")));
        }
        self.set(key, value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn parsed<V: FromStr>(&self, key: &str) -> Result<Option<V>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<V>().map(Some).map_err(|_| RfsError::Config(format!("{key}: cannot parse '{v}'"))),
        }
    }

    fn or<V: FromStr>(&self, key: &str, default: V) -> Result<V> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn list<V: FromStr>(&self, key: &str) -> Result<Option<Vec<V>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<V>().map_err(|_| RfsError::Config(format!("{key}: cannot parse list item '{s}'"))))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key).map(str::to_ascii_lowercase).as_deref() {
            None => Ok(default),
            Some("true" | "yes" | "on" | "1") => Ok(true),
            Some("false" | "no" | "off" | "0") => Ok(false),
            Some(other) => Err(RfsError::Config(format!("{key}: expected a boolean, got '{other}'"))),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    let cut = line.find(['#', ';']).unwrap_or(line.len());
    &line[..cut]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Sweep,
    Rates,
    Verify,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Rates => "rates",
            ExperimentKind::Verify => "verify",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = RfsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sweep" => Ok(ExperimentKind::Sweep),
            "rates" => Ok(ExperimentKind::Rates),
            "verify" => Ok(ExperimentKind::Verify),
            other => Err(RfsError::Config(format!("unknown experiment kind '{other}'"))),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Feature family selected in a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureChoice {
    GaussianRff,
    NtkSigmoid,
    NtkRelu,
    ModelFourier,
}

impl FromStr for FeatureChoice {
    type Err = RfsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rff" | "gaussian" | "gaussian-rff" => Ok(FeatureChoice::GaussianRff),
            "ntk" | "ntk-sigmoid" => Ok(FeatureChoice::NtkSigmoid),
            "ntk-relu" => Ok(FeatureChoice::NtkRelu),
            "model-fourier" | "fourier" => Ok(FeatureChoice::ModelFourier),
            other => Err(RfsError::Config(format!("unknown feature kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSettings {
    pub kind: FeatureChoice,
    pub bandwidth: f64,
    pub tau: f64,
    pub gamma: f64,
    /// Collapse repeated model-Fourier frequencies (same estimator, fewer columns).
    pub merge: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    /// Spectral route when the iteration count is large, stepping otherwise.
    Auto,
    Iterative,
    Spectral,
}

impl FromStr for SolverChoice {
    type Err = RfsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(SolverChoice::Auto),
            "iterative" => Ok(SolverChoice::Iterative),
            "spectral" => Ok(SolverChoice::Spectral),
            other => Err(RfsError::Config(format!("unknown solver '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSettings {
    pub method: FilterMethod,
    /// Explicit step size; `None` means `step_scale / kappa^2`.
    pub alpha: Option<f64>,
    pub step_scale: f64,
    pub beta: f64,
    pub solver: SolverChoice,
}

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Synthetic {
        /// `None` picks `max(200, 10 sqrt(n_max))`.
        frequencies: Option<usize>,
        b: f64,
        r: f64,
        source_norm: f64,
        noise: f64,
        n: usize,
        n_test: usize,
    },
    Csv {
        path: PathBuf,
        label: String,
        limit: Option<usize>,
        classes: Option<(f64, f64)>,
        train_fraction: f64,
        standardize: bool,
    },
    Blobs {
        n: usize,
        d: usize,
        separation: f64,
        train_fraction: f64,
        standardize: bool,
    },
}

impl DataSpec {
    /// Frequency count of a synthetic model for the largest sample size in play.
    pub fn synthetic_frequencies(&self, n_max: usize) -> Option<usize> {
        match self {
            DataSpec::Synthetic { frequencies, .. } => {
                Some(frequencies.unwrap_or_else(|| default_frequency_count(n_max)))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grids {
    /// Explicit feature counts; when absent, `ceil(c sqrt(n) d)` for each factor.
    pub m_list: Option<Vec<usize>>,
    pub m_factors: Vec<f64>,
    pub t_list: Vec<usize>,
    pub n_list: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheorySettings {
    pub c_lambda: f64,
    pub c_m: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySettings {
    pub t_points: usize,
    pub lambda_points: usize,
    pub lambda_min: f64,
    pub q_list: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub experiment_id: String,
    pub base_seed: u64,
    pub repetitions: usize,
    /// Worker threads; zero uses every available core.
    pub threads: usize,
    pub output: PathBuf,
    /// Write `wall_ms`; disable for byte-comparable detail files.
    pub timing: bool,
    pub data: DataSpec,
    pub features: FeatureSettings,
    pub filter: FilterSettings,
    pub grids: Grids,
    pub theory: TheorySettings,
    pub verify: VerifySettings,
}

pub const DEFAULT_REPETITIONS: usize = 20;
pub const DEFAULT_M_FACTORS: [f64; 7] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];

fn default_t_list() -> Vec<usize> {
    (0..=10).map(|i| 1usize << i).collect()
}

impl ExperimentConfig {
    /// Builds a typed config; `kind` from the command line wins over `experiment.kind`.
    pub fn from_map(map: &ConfigMap, kind: Option<ExperimentKind>) -> Result<Self> {
        let kind = match kind {
            Some(k) => k,
            None => {
                map.parsed("experiment.kind")?.ok_or_else(|| RfsError::Config("experiment.kind is required".into()))?
            }
        };
        let experiment_id = map.get("experiment.id").unwrap_or(kind.name()).to_string();
        let base_seed = map.or("experiment.seed", 0u64)?;
        let repetitions = map.or("experiment.repetitions", DEFAULT_REPETITIONS)?;
        let threads = map.or("experiment.threads", 0usize)?;
        let output = PathBuf::from(map.get("experiment.out").unwrap_or(&format!("{}.csv", kind.name())));
        let timing = map.flag("experiment.timing", true)?;

        let source = map.get("data.source").unwrap_or("synthetic").to_ascii_lowercase();
        let train_fraction = map.or("data.train_fraction", 0.5)?;
        let standardize = map.flag("data.standardize", true)?;
        let data = match source.as_str() {
            "synthetic" => DataSpec::Synthetic {
                frequencies: map.parsed("data.frequencies")?,
                b: map.or("data.b", 0.5)?,
                r: map.or("data.r", 0.5)?,
                source_norm: map.or("data.source_norm", 1.0)?,
                noise: map.or("data.noise", 0.5)?,
                n: map.or("data.n", 2000)?,
                n_test: map.or("data.n_test", 2000)?,
            },
            "csv" => {
                let classes = match map.list::<f64>("data.classes")? {
                    None => None,
                    Some(v) if v.len() == 2 => Some((v[0], v[1])),
                    Some(_) => {
                        return Err(RfsError::Config("data.classes needs exactly two values: negative,positive".into()))
                    }
                };
                DataSpec::Csv {
                    path: PathBuf::from(
                        map.get("data.path")
                            .ok_or_else(|| RfsError::Config("data.path is required for csv data".into()))?,
                    ),
                    label: map.get("data.label").unwrap_or("last").to_string(),
                    limit: map.parsed("data.limit")?,
                    classes,
                    train_fraction,
                    standardize,
                }
            }
            "blobs" => DataSpec::Blobs {
                n: map.or("data.n", 2000)?,
                d: map.or("data.d", 14)?,
                separation: map.or("data.separation", 2.0)?,
                train_fraction,
                standardize,
            },
            other => return Err(RfsError::Config(format!("unknown data.source '{other}'"))),
        };

        let default_features = if matches!(data, DataSpec::Synthetic { .. }) && kind == ExperimentKind::Rates {
            FeatureChoice::ModelFourier
        } else {
            FeatureChoice::NtkSigmoid
        };
        let features = FeatureSettings {
            kind: map.parsed("features.kind")?.unwrap_or(default_features),
            bandwidth: map.or("features.bandwidth", 1.0)?,
            tau: map.or("features.tau", 1.0)?,
            gamma: map.or("features.gamma", 1.0)?,
            merge: map.flag("features.merge", true)?,
        };
        let filter = FilterSettings {
            method: map.parsed("filter.method")?.unwrap_or(FilterMethod::Landweber),
            alpha: map.parsed("filter.alpha")?,
            step_scale: map.or("filter.step_scale", 0.5)?,
            beta: map.or("filter.beta", 0.5)?,
            solver: map.parsed("filter.solver")?.unwrap_or(SolverChoice::Auto),
        };
        let grids = Grids {
            m_list: map.list("grid.m")?,
            m_factors: map.list("grid.m_factors")?.unwrap_or_else(|| DEFAULT_M_FACTORS.to_vec()),
            t_list: map.list("grid.t")?.unwrap_or_else(default_t_list),
            n_list: map.list("grid.n")?.unwrap_or_else(|| vec![512, 1024, 2048, 4096, 8192]),
        };
        let theory = TheorySettings {
            c_lambda: map.or("theory.c_lambda", 1.0)?,
            c_m: map.or("theory.c_m", 1.0)?,
            delta: map.or("theory.delta", 0.05)?,
        };
        let verify = VerifySettings {
            t_points: map.or("verify.t_points", 1000)?,
            lambda_points: map.or("verify.lambda_points", 1000)?,
            lambda_min: map.or("verify.lambda_min", 1e-3)?,
            q_list: map.list("verify.q")?.unwrap_or_else(|| vec![0.5, 1.0, 2.0, 4.0]),
            alpha: map.or("verify.alpha", 1.0)?,
            beta: map.or("verify.beta", 0.5)?,
            instances: map.or("verify.instances", 5)?,
        };
        let config = ExperimentConfig {
            kind,
            experiment_id,
            base_seed,
            repetitions,
            threads,
            output,
            timing,
            data,
            features,
            filter,
            grids,
            theory,
            verify,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(RfsError::Config(m));
        if self.repetitions == 0 {
            return fail("experiment.repetitions must be at least 1".into());
        }
        if self.experiment_id.contains([',', '"', '\n']) {
            return fail("experiment.id must not contain commas, quotes or newlines".into());
        }
        match &self.data {
            DataSpec::Synthetic { frequencies, b, r, source_norm, noise, n, .. } => {
                if frequencies == &Some(0) {
                    return fail("data.frequencies must be at least 1".into());
                }
                if !(*b > 0.0 && *b <= 1.0) || !(*r > 0.0) || !(2.0 * r + b > 1.0) {
                    return fail("synthetic data needs b in (0, 1], r > 0 and 2r + b > 1".into());
                }
                if !(*source_norm > 0.0) || !(*noise >= 0.0) {
                    return fail("data.source_norm must be positive and data.noise nonnegative".into());
                }
                if *n == 0 && self.kind == ExperimentKind::Sweep {
                    return fail("data.n must be at least 1".into());
                }
            }
            DataSpec::Csv { train_fraction, limit, .. } => {
                if !(*train_fraction > 0.0 && *train_fraction < 1.0) {
                    return fail("data.train_fraction must lie in (0, 1)".into());
                }
                if *limit == Some(0) {
                    return fail("data.limit must be at least 1".into());
                }
            }
            DataSpec::Blobs { n, d, separation, train_fraction, .. } => {
                if *n < 2 || *d == 0 || !(*separation >= 0.0) {
                    return fail("blobs need n >= 2, d >= 1 and a nonnegative separation".into());
                }
                if !(*train_fraction > 0.0 && *train_fraction < 1.0) {
                    return fail("data.train_fraction must lie in (0, 1)".into());
                }
            }
        }
        let f = &self.features;
        if !(f.bandwidth > 0.0) || !(f.tau > 0.0) || !(f.gamma >= 0.0) {
            return fail("features.bandwidth and features.tau must be positive, features.gamma nonnegative".into());
        }
        let fl = &self.filter;
        if fl.alpha.is_some_and(|a| !(a > 0.0)) || !(fl.step_scale > 0.0 && fl.step_scale <= 1.0) {
            return fail("filter.alpha must be positive and filter.step_scale in (0, 1]".into());
        }
        if !(fl.beta >= 0.0 && fl.beta < 1.0) {
            return fail("filter.beta must lie in [0, 1)".into());
        }
        let g = &self.grids;
        if g.m_list.as_ref().is_some_and(|m| m.is_empty() || m.contains(&0)) || g.m_factors.iter().any(|&c| !(c > 0.0))
        {
            return fail("grid.m entries must be positive".into());
        }
        if g.m_list.is_none() && g.m_factors.is_empty() {
            return fail("grid.m_factors must not be empty".into());
        }
        if g.t_list.is_empty() || g.t_list.contains(&0) {
            return fail("grid.t must be a nonempty list of positive iteration counts".into());
        }
        if self.kind == ExperimentKind::Rates {
            if !matches!(self.data, DataSpec::Synthetic { .. }) {
                return fail("rates experiments need synthetic data (the analytic error is required)".into());
            }
            if f.kind != FeatureChoice::ModelFourier {
                return fail("rates experiments need model-fourier features".into());
            }
            if g.n_list.len() < 4 {
                return fail("grid.n needs at least 4 sample sizes".into());
            }
            let lo = *g.n_list.iter().min().unwrap_or(&0) as f64;
            let hi = *g.n_list.iter().max().unwrap_or(&0) as f64;
            if !(lo > 0.0 && hi >= 10.0 * lo) {
                return fail("grid.n must span at least one decade".into());
            }
        }
        let t = &self.theory;
        if !(t.c_lambda > 0.0 && t.c_m > 0.0 && t.delta > 0.0 && t.delta < 1.0) {
            return fail("theory.c_lambda and theory.c_m must be positive, theory.delta in (0, 1)".into());
        }
        let v = &self.verify;
        if v.t_points < 2 || v.lambda_points < 1 || !(v.lambda_min > 0.0 && v.lambda_min <= 1.0) || v.instances == 0 {
            return fail(
                "verify grids need at least 2 t points, 1 lambda point, lambda_min in (0, 1] and 1 instance".into(),
            );
        }
        if !(v.alpha > 0.0 && v.alpha <= 1.0)
            || !(v.beta >= 0.0 && v.beta < 1.0)
            || v.q_list.iter().any(|&q| !(q >= 0.0))
        {
            return fail("verify.alpha must lie in (0, 1], verify.beta in [0, 1), verify.q nonnegative".into());
        }
        Ok(())
    }

    /// Feature counts for a training size `n` and input dimension `d`.
    pub fn m_values(&self, n: usize, d: usize) -> Vec<usize> {
        match &self.grids.m_list {
            Some(m) => m.clone(),
            None => {
                let mut out: Vec<usize> = self
                    .grids
                    .m_factors
                    .iter()
                    .map(|c| ((c * (n as f64).sqrt() * d as f64).ceil() as usize).max(1))
                    .collect();
                out.dedup();
                out
            }
        }
    }

    /// Sibling output path with `suffix` inserted before the extension.
    pub fn companion_path(&self, suffix: &str) -> PathBuf {
        let stem = self.output.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
        let ext = self.output.extension().and_then(|s| s.to_str()).unwrap_or("csv");
        self.output.with_file_name(format!("{stem}.{suffix}.{ext}"))
    }
}
