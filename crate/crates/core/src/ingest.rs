//! Datasets: CSV loading and writing, standardization, train/test splits and an
//! offline stand-in classification generator.

use std::env;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result, RfsError};
use crate::scalar::Scalar;

/// Directory searched for relative CSV paths that do not exist as given.
pub const DATA_DIR_ENV: &str = "RFS_DATA_DIR";

/// Guard below which a column counts as constant.
pub const STD_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    /// Labels are `-1` or `+1`.
    Classification,
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        model_id: u64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
    },
    Generated {
        name: String,
        seed: u64,
    },
    /// Rows selected from another dataset.
    Derived {
        from: Box<DataSource>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar> {
    pub x: DMatrix<T>,
    pub y: DVector<T>,
    pub source: DataSource,
    pub feature_names: Option<Vec<String>>,
    pub task: Task,
}

impl<T: Scalar> Dataset<T> {
    /// Checks shapes, finiteness and the label set of classification data.
    pub fn new(x: DMatrix<T>, y: DVector<T>, source: DataSource, task: Task) -> Result<Self> {
        if x.nrows() == 0 {
            return invalid("dataset needs at least one row");
        }
        if x.nrows() != y.len() {
            return Err(RfsError::DimensionMismatch { expected: x.nrows(), found: y.len() });
        }
        if x.iter().any(|v| !v.is_finite_value()) {
            return Err(RfsError::NonFinite("dataset inputs"));
        }
        if y.iter().any(|v| !v.is_finite_value()) {
            return Err(RfsError::NonFinite("dataset labels"));
        }
        if task == Task::Classification && y.iter().any(|&v| v != T::one() && v != -T::one()) {
            return invalid("classification labels must be -1 or +1");
        }
        Ok(Dataset { x, y, source, feature_names: None, task })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d() {
            return Err(RfsError::DimensionMismatch { expected: self.d(), found: names.len() });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return invalid("selection is empty");
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return invalid(format!("row index {bad} out of range for {} rows", self.n()));
        }
        let x = self.x.select_rows(indices);
        let y = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.y[i]));
        Ok(Dataset {
            x,
            y,
            source: DataSource::Derived { from: Box::new(self.source.clone()) },
            feature_names: self.feature_names.clone(),
            task: self.task,
        })
    }

    fn column_names(&self) -> Vec<String> {
        self.feature_names.clone().unwrap_or_else(|| (1..=self.d()).map(|i| format!("x{i}")).collect())
    }

    /// Header row of feature names then `y`; values use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.column_names();
        header.push("y".into());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.d() + 1);
        for i in 0..self.n() {
            record.clear();
            record.extend(self.x.row(i).iter().map(|v| v.to_string()));
            record.push(self.y[i].to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

/// Which column holds the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    /// Zero-based; negative counting is not supported.
    Index(usize),
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// Header present iff some cell of the first row is not a number.
    #[default]
    Auto,
    Present,
    Absent,
}

/// Raw label values mapped to `-1` and `+1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMapping {
    pub negative: f64,
    pub positive: f64,
}

impl Default for ClassMapping {
    fn default() -> Self {
        ClassMapping { negative: 0.0, positive: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub label: LabelColumn,
    pub limit: Option<usize>,
    /// `Some` makes the dataset a classification task.
    pub class_mapping: Option<ClassMapping>,
    pub header: HeaderMode,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { label: LabelColumn::Last, limit: None, class_mapping: None, header: HeaderMode::Auto }
    }
}

/// Resolves `path`, falling back to `$RFS_DATA_DIR/path` for missing relative paths.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = env::var_os(DATA_DIR_ENV) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

pub fn load_csv<T: Scalar>(path: &Path, options: &CsvOptions) -> Result<Dataset<T>> {
    let resolved = resolve_data_path(path);
    let file = File::open(&resolved)?;
    let mut ds = read_csv(file, options)?;
    ds.source = DataSource::Csv { path: resolved };
    Ok(ds)
}

/// Parses CSV text from any reader. Line numbers in errors are 1-based file lines.
pub fn read_csv<T: Scalar, R: Read>(input: R, options: &CsvOptions) -> Result<Dataset<T>> {
    if options.limit == Some(0) {
        return invalid("row limit must be at least 1");
    }
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).flexible(true).from_reader(input);
    let mut records = reader.records();
    let first = match records.next() {
        Some(r) => r?,
        None => return invalid("CSV input is empty"),
    };
    let has_header = match options.header {
        HeaderMode::Present => true,
        HeaderMode::Absent => false,
        HeaderMode::Auto => first.iter().any(|cell| cell.parse::<f64>().is_err()),
    };
    let width = first.len();
    let header: Option<Vec<String>> = has_header.then(|| first.iter().map(str::to_string).collect());
    let label_idx = match &options.label {
        LabelColumn::Last => width - 1,
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => {
            return Err(RfsError::Config(format!("label column {i} missing: rows have {width} columns")))
        }
        LabelColumn::Name(name) => match &header {
            Some(h) => h
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| RfsError::Config(format!("label column '{name}' not found in header")))?,
            None => {
                return Err(RfsError::Config(format!("label column '{name}' requested but the file has no header")))
            }
        },
    };
    if width < 2 {
        return invalid("CSV needs at least one feature column and a label column");
    }

    let limit = options.limit.unwrap_or(usize::MAX);
    let mut xs: Vec<T> = Vec::new();
    let mut ys: Vec<T> = Vec::new();
    let pending = if has_header { None } else { Some(Ok(first)) };
    for record in pending.into_iter().chain(records) {
        if ys.len() >= limit {
            break;
        }
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != width {
            return Err(RfsError::Parse { line, message: format!("expected {width} fields, found {}", record.len()) });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: T = cell.parse().map_err(|_| RfsError::Parse {
                line,
                message: format!("column {}: '{cell}' is not a number", j + 1),
            })?;
            if !v.is_finite_value() {
                return Err(RfsError::Parse { line, message: format!("column {}: non-finite value '{cell}'", j + 1) });
            }
            if j == label_idx {
                ys.push(match options.class_mapping {
                    None => v,
                    Some(m) => {
                        let raw = v.as_f64();
                        if raw == m.negative {
                            -T::one()
                        } else if raw == m.positive {
                            T::one()
                        } else {
                            return Err(RfsError::Parse {
                                line,
                                message: format!("label '{cell}' is not a mapped class"),
                            });
                        }
                    }
                });
            } else {
                xs.push(v);
            }
        }
    }
    if ys.is_empty() {
        return invalid("CSV input has no data rows");
    }
    let n = ys.len();
    let x = DMatrix::from_row_slice(n, width - 1, &xs);
    let task = if options.class_mapping.is_some() { Task::Classification } else { Task::Regression };
    let ds = Dataset::new(x, DVector::from_vec(ys), DataSource::Csv { path: PathBuf::new() }, task)?;
    match header {
        Some(mut h) => {
            h.remove(label_idx);
            ds.with_feature_names(h)
        }
        None => Ok(ds),
    }
}

/// Per-column affine map fitted on one dataset and reusable on others.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T: Scalar> {
    pub mean: Vec<T>,
    /// Population standard deviation; zero marks a constant column.
    pub std: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit(ds: &Dataset<T>) -> Result<Self> {
        if ds.n() < 2 {
            return invalid("standardization needs at least two rows");
        }
        let n = T::from_count(ds.n());
        let mut mean = Vec::with_capacity(ds.d());
        let mut std = Vec::with_capacity(ds.d());
        for col in ds.x.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().fold(T::zero(), |a, &v| a + (v - m) * (v - m)) / n;
            let s = var.sqrt();
            mean.push(m);
            std.push(if s <= T::lit(STD_GUARD) { T::zero() } else { s });
        }
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, ds: &Dataset<T>) -> Result<Dataset<T>> {
        if ds.d() != self.mean.len() {
            return Err(RfsError::DimensionMismatch { expected: self.mean.len(), found: ds.d() });
        }
        let mut out = ds.clone();
        for (j, mut col) in out.x.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            for v in col.iter_mut() {
                *v = if s == T::zero() { T::zero() } else { (*v - m) / s };
            }
        }
        Ok(out)
    }
}

/// Standardizes `ds` with its own statistics.
pub fn standardize<T: Scalar>(ds: &Dataset<T>) -> Result<(Dataset<T>, Standardizer<T>)> {
    let st = Standardizer::fit(ds)?;
    Ok((st.apply(ds)?, st))
}

/// Seeded permutation of `0..n` cut into `floor(fraction n)` training and the
/// remaining test indices.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return invalid("train fraction must lie in (0, 1)");
    }
    // the epsilon keeps 0.7 * 100 from rounding down to 69
    let n_train = (train_fraction * n as f64 + 1e-9).floor() as usize;
    if n_train == 0 || n_train >= n {
        return invalid(format!("split of {n} rows at fraction {train_fraction} leaves one side empty"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

pub fn split<T: Scalar>(ds: &Dataset<T>, train_fraction: f64, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    let (train, test) = split_indices(ds.n(), train_fraction, seed)?;
    Ok((ds.select(&train)?, ds.select(&test)?))
}

/// Two Gaussian blobs with identity covariance whose means sit `separation`
/// apart along the diagonal; labels are fair coin flips.
pub fn two_blobs<T: Scalar>(n: usize, d: usize, separation: f64, seed: u64) -> Result<Dataset<T>> {
    if n == 0 || d == 0 {
        return invalid("two_blobs needs n >= 1 and d >= 1");
    }
    if !(separation >= 0.0) || !separation.is_finite() {
        return invalid("separation must be nonnegative and finite");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = 0.5 * separation / (d as f64).sqrt();
    let mut x = DMatrix::zeros(n, d);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let label = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        y[i] = T::lit(label);
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            x[(i, j)] = T::lit(z + label * shift);
        }
    }
    Dataset::new(x, y, DataSource::Generated { name: "two-blobs".into(), seed }, Task::Classification)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, options: &CsvOptions) -> Result<Dataset<f64>> {
        read_csv(text.as_bytes(), options)
    }

    #[test]
    fn limit_keeps_leading_rows() {
        let ds = parse("a,b,y\n1,2,3\n4,5,6\n7,8,9\n", &CsvOptions { limit: Some(2), ..Default::default() }).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.x[(1, 0)], 4.0);
        assert_eq!(ds.y.as_slice(), &[3.0, 6.0]);
        assert_eq!(ds.feature_names.as_deref(), Some(&["a".to_string(), "b".to_string()][..]));
    }

    #[test]
    fn headerless_file_and_label_by_index() {
        let ds = parse("1,0,2\n3,1,4\n", &CsvOptions { label: LabelColumn::Index(1), ..Default::default() }).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.x.row(1).iter().copied().collect::<Vec<_>>(), vec![3.0, 4.0]);
        assert_eq!(ds.y.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn class_mapping_gives_signs() {
        let opts = CsvOptions {
            label: LabelColumn::Name("cls".into()),
            class_mapping: Some(ClassMapping::default()),
            ..Default::default()
        };
        let ds = parse("cls,f\n0,1.5\n1,2.5\n1,0\n", &opts).unwrap();
        assert_eq!(ds.task, Task::Classification);
        assert_eq!(ds.y.as_slice(), &[-1.0, 1.0, 1.0]);
        assert!(parse("cls,f\n2,1.5\n", &opts).is_err());
    }

    #[test]
    fn nan_cell_names_its_line() {
        match parse("a,y\n1,2\nNaN,3\n", &CsvOptions::default()) {
            Err(RfsError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse("1,2\n3,x\n", &CsvOptions { header: HeaderMode::Absent, ..Default::default() }) {
            Err(RfsError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        assert!(parse("", &CsvOptions::default()).is_err());
        assert!(parse("a,y\n", &CsvOptions::default()).is_err());
        assert!(matches!(parse("a,y\n1,2,3\n", &CsvOptions::default()), Err(RfsError::Parse { line: 2, .. })));
        let missing = CsvOptions { label: LabelColumn::Name("z".into()), ..Default::default() };
        assert!(matches!(parse("a,y\n1,2\n", &missing), Err(RfsError::Config(_))));
        assert!(parse("a,y\n1,2\n", &CsvOptions { limit: Some(0), ..Default::default() }).is_err());
    }

    #[test]
    fn two_point_column() {
        let ds = Dataset::new(
            DMatrix::from_column_slice(2, 1, &[1.0, 3.0]),
            DVector::zeros(2),
            DataSource::Generated { name: "t".into(), seed: 0 },
            Task::Regression,
        )
        .unwrap();
        let (out, st) = standardize(&ds).unwrap();
        assert_eq!(out.x.as_slice(), &[-1.0, 1.0]);
        assert_eq!(st.mean, vec![2.0]);
        assert_eq!(st.std, vec![1.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let ds = Dataset::new(
            DMatrix::from_column_slice(3, 1, &[5.0, 5.0, 5.0]),
            DVector::zeros(3),
            DataSource::Generated { name: "t".into(), seed: 0 },
            Task::Regression,
        )
        .unwrap();
        let (out, st) = standardize(&ds).unwrap();
        assert_eq!(out.x.as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(st.std, vec![0.0]);
    }

    #[test]
    fn stored_transform_reproduces() {
        let ds = two_blobs::<f64>(50, 3, 2.0, 1).unwrap();
        let (out, st) = standardize(&ds).unwrap();
        assert_eq!(st.apply(&ds).unwrap(), out);
        let (twice, _) = standardize(&out).unwrap();
        assert!((twice.x - &out.x).amax() < 1e-10);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (a, b) = split_indices(100, 0.8, 3).unwrap();
        assert_eq!((a.len(), b.len()), (80, 20));
        assert_eq!(split_indices(100, 0.8, 3).unwrap(), (a, b));
        assert_eq!(split_indices(100, 0.7, 3).unwrap().0.len(), 70);
        assert!(split_indices(1, 0.5, 0).is_err());
        assert!(split_indices(10, 1.0, 0).is_err());
        assert!(split_indices(10, 0.01, 0).is_err());
    }

    #[test]
    fn blobs_are_labelled() {
        let ds = two_blobs::<f64>(200, 14, 3.0, 9).unwrap();
        assert_eq!((ds.n(), ds.d()), (200, 14));
        assert_eq!(ds.task, Task::Classification);
        let pos = ds.y.iter().filter(|&&v| v > 0.0).count();
        assert!(pos > 60 && pos < 140);
        assert_eq!(two_blobs::<f64>(200, 14, 3.0, 9).unwrap(), ds);
    }

    proptest! {
        #[test]
        fn split_is_partition(n in 2usize..500, fraction in 0.01f64..0.99, seed in any::<u64>()) {
            match split_indices(n, fraction, seed) {
                Ok((train, test)) => {
                    prop_assert_eq!(train.len(), (fraction * n as f64 + 1e-9).floor() as usize);
                    let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
                    all.sort_unstable();
                    prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                }
                Err(_) => {
                    let k = (fraction * n as f64 + 1e-9).floor() as usize;
                    prop_assert!(k == 0 || k >= n);
                }
            }
        }
    }
}
