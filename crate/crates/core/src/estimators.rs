//! Random-feature estimators.
//!
//! Every estimator here is `theta = phi(Sigma_M) S_M^* y` in feature space, with
//! `Sigma_M = Phi^T Phi / n` and `S_M^* y = Phi^T y / n`:
//!
//! * [`fit_rf_krr`] solves the Tikhonov normal equations directly;
//! * [`fit_rf_iterative`] runs gradient descent, heavy-ball or Nesterov on `theta`
//!   from `theta_0 = theta_{-1} = 0`;
//! * [`FeatureSpectralSolver`] applies any filter through an eigendecomposition,
//!   which reaches large iteration counts at the cost of one decomposition;
//! * [`fit_kernel_oracle`] applies the filter to an `n x n` Gram matrix in dual
//!   coordinates and serves as the independent reference for the others.

use std::io::{BufRead, Write};

use nalgebra::{linalg::SymmetricEigen, Cholesky, DMatrix, DVector};

use crate::error::{invalid, Result, RfsError};
use crate::featuremaps::{FeatureMap, FeatureMatrix};
use crate::filters::{FilterMethod, FilterSpec};
use crate::scalar::Scalar;

/// Largest Gram matrix the dual oracle accepts by default.
pub const DEFAULT_ORACLE_CAP: usize = 2000;

/// Relative negativity tolerated (and clamped to zero) in a PSD spectrum.
pub const PSD_CLAMP_TOLERANCE: f64 = 1e-6;

/// Eigendecomposition of a symmetric PSD matrix, eigenvalues nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition<T: Scalar> {
    eigenvalues: DVector<T>,
    eigenvectors: DMatrix<T>,
}

impl<T: Scalar> SpectralDecomposition<T> {
    /// Decomposes `a` as given. Eigenvalues in `[-1e-6 trace, 0)` are clamped to
    /// zero; anything more negative is an error.
    pub fn of_symmetric(a: DMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return invalid("matrix must be square");
        }
        if a.iter().any(|v| !v.is_finite_value()) {
            return Err(RfsError::NonFinite("matrix to decompose"));
        }
        let n = a.nrows();
        if n == 0 {
            return invalid("matrix must be nonempty");
        }
        let trace = a.trace();
        let eig = SymmetricEigen::try_new(a, <T as Scalar>::epsilon(), 0)
            .ok_or_else(|| RfsError::Decomposition("symmetric eigensolver did not converge".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order
            .sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap_or(std::cmp::Ordering::Equal));
        let floor = -T::lit(PSD_CLAMP_TOLERANCE) * trace.abs();
        let mut eigenvalues = DVector::zeros(n);
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let v = eig.eigenvalues[src];
            if v < floor {
                return Err(RfsError::NotPositiveSemidefinite { value: v.as_f64(), trace: trace.as_f64() });
            }
            eigenvalues[dst] = v.max(T::zero());
            eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Ok(SpectralDecomposition { eigenvalues, eigenvectors })
    }

    /// Decomposes `K / n` for an `n x n` Gram matrix `K`.
    pub fn of_gram(gram: &DMatrix<T>) -> Result<Self> {
        let n = T::from_count(gram.nrows());
        Self::of_symmetric(gram / n)
    }

    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<T> {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `g(A) v = V g(Lambda) V^T v`.
    pub fn apply<F: Fn(T) -> T>(&self, g: F, v: &DVector<T>) -> DVector<T> {
        let mut coords = self.eigenvectors.tr_mul(v);
        for (c, &l) in coords.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= g(l);
        }
        &self.eigenvectors * coords
    }

    /// `phi(A) v` for a spectral filter.
    pub fn apply_filter(&self, filter: &FilterSpec<T>, v: &DVector<T>) -> DVector<T> {
        self.apply(|t| filter.phi(t), v)
    }

    /// `max |V Lambda V^T - a|` entrywise.
    pub fn reconstruction_error(&self, a: &DMatrix<T>) -> T {
        let scaled = DMatrix::from_fn(self.dim(), self.dim(), |i, j| self.eigenvectors[(i, j)] * self.eigenvalues[j]);
        let rebuilt = scaled * self.eigenvectors.transpose();
        (rebuilt - a).amax()
    }
}

/// Parameter vector of a fitted random-feature model.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState<T: Scalar> {
    pub theta: DVector<T>,
    /// Previous iterate; equals `theta` for closed-form fits.
    pub theta_prev: DVector<T>,
    pub iteration: usize,
    pub filter: FilterSpec<T>,
    /// Identity of the feature map the model was fitted on, if any.
    pub map_id: Option<u64>,
}

const SNAPSHOT_MAGIC: &str = "rfs-estimator-state v1";

impl<T: Scalar> EstimatorState<T> {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Plain-text snapshot: a header with the dimensions, then one value per line.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{SNAPSHOT_MAGIC}")?;
        writeln!(out, "dim {}", self.dim())?;
        writeln!(out, "iteration {}", self.iteration)?;
        writeln!(
            out,
            "filter {} {} {} {} {} {}",
            self.filter.method().name(),
            self.filter.lambda(),
            self.filter.alpha(),
            self.filter.beta(),
            self.filter.iterations(),
            self.filter.t_max()
        )?;
        match self.map_id {
            Some(id) => writeln!(out, "map {id}")?,
            None => writeln!(out, "map none")?,
        }
        writeln!(out, "theta")?;
        for v in self.theta.iter() {
            writeln!(out, "{v}")?;
        }
        writeln!(out, "theta_prev")?;
        for v in self.theta_prev.iter() {
            writeln!(out, "{v}")?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((no, Ok(l))) => Ok((no, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => {
                    Err(RfsError::Parse { line: 0, message: format!("unexpected end of snapshot, expected {what}") })
                }
            }
        };
        let bad = |line: usize, message: String| RfsError::Parse { line, message };
        let (no, magic) = next("header")?;
        if magic.trim() != SNAPSHOT_MAGIC {
            return Err(bad(no, "not an estimator snapshot".into()));
        }
        let field = |no: usize, line: &str, key: &str| -> Result<Vec<String>> {
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(no, format!("expected '{key}'")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let parse_num =
            |no: usize, s: &str| -> Result<T> { s.parse::<T>().map_err(|_| bad(no, format!("bad number '{s}'"))) };
        let parse_usize = |no: usize, s: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|_| bad(no, format!("bad count '{s}'")))
        };

        let (no, l) = next("dim")?;
        let dim = parse_usize(no, field(no, &l, "dim")?.first().map(String::as_str).unwrap_or(""))?;
        let (no, l) = next("iteration")?;
        let iteration = parse_usize(no, field(no, &l, "iteration")?.first().map(String::as_str).unwrap_or(""))?;
        let (no, l) = next("filter")?;
        let f = field(no, &l, "filter")?;
        if f.len() != 6 {
            return Err(bad(no, "filter line needs 6 fields".into()));
        }
        let method: FilterMethod = f[0].parse().map_err(|_| bad(no, format!("unknown method '{}'", f[0])))?;
        let lambda = parse_num(no, &f[1])?;
        let alpha = parse_num(no, &f[2])?;
        let beta = parse_num(no, &f[3])?;
        let k = parse_usize(no, &f[4])?;
        let t_max = parse_num(no, &f[5])?;
        let filter = match method {
            FilterMethod::Tikhonov => FilterSpec::tikhonov(lambda)?.with_t_max(t_max)?,
            m => FilterSpec::iterative_on(m, alpha, beta, k, t_max)?,
        };
        let (no, l) = next("map")?;
        let m = field(no, &l, "map")?;
        let map_id = match m.first().map(String::as_str) {
            Some("none") => None,
            Some(s) => Some(s.parse::<u64>().map_err(|_| bad(no, format!("bad map id '{s}'")))?),
            None => return Err(bad(no, "missing map id".into())),
        };
        let mut read_vec = |key: &str| -> Result<DVector<T>> {
            let (no, l) = next(key)?;
            if l.trim() != key {
                return Err(bad(no, format!("expected '{key}'")));
            }
            let mut v = DVector::zeros(dim);
            for slot in v.iter_mut() {
                let (no, l) = next("value")?;
                *slot = parse_num(no, l.trim())?;
            }
            Ok(v)
        };
        let theta = read_vec("theta")?;
        let theta_prev = read_vec("theta_prev")?;
        Ok(EstimatorState { theta, theta_prev, iteration, filter, map_id })
    }
}

fn check_data<T: Scalar>(phi: &FeatureMatrix<T>, y: &DVector<T>) -> Result<()> {
    if phi.nrows() == 0 {
        return invalid("need at least one sample");
    }
    if phi.nrows() != y.len() {
        return Err(RfsError::DimensionMismatch { expected: phi.nrows(), found: y.len() });
    }
    if phi.values().iter().any(|v| !v.is_finite_value()) {
        return Err(RfsError::NonFinite("feature matrix"));
    }
    if y.iter().any(|v| !v.is_finite_value()) {
        return Err(RfsError::NonFinite("targets"));
    }
    Ok(())
}

/// `Phi^T y / n`.
fn feature_rhs<T: Scalar>(phi: &DMatrix<T>, y: &DVector<T>) -> DVector<T> {
    phi.tr_mul(y) / T::from_count(phi.nrows())
}

/// `Phi^T Phi / n`.
fn feature_covariance<T: Scalar>(phi: &DMatrix<T>) -> DMatrix<T> {
    phi.tr_mul(phi) / T::from_count(phi.nrows())
}

/// Random-feature ridge regression: minimizes `|Phi theta - y|^2 / n + lambda |theta|^2`.
///
/// Solves the `D x D` primal system when `D <= n` and the `n x n` dual one otherwise.
pub fn fit_rf_krr<T: Scalar>(phi: &FeatureMatrix<T>, y: &DVector<T>, lambda: T) -> Result<EstimatorState<T>> {
    check_data(phi, y)?;
    let filter = FilterSpec::tikhonov(lambda)?;
    let values = phi.values();
    let n = values.nrows();
    let d = values.ncols();
    let theta = if d <= n {
        let mut a = feature_covariance(values);
        for i in 0..d {
            a[(i, i)] += lambda;
        }
        let chol =
            Cholesky::new(a).ok_or_else(|| RfsError::Decomposition("ridge system is not positive definite".into()))?;
        chol.solve(&feature_rhs(values, y))
    } else {
        // theta = Phi^T (Phi Phi^T + n lambda I)^{-1} y
        let mut k = values * values.transpose();
        let shift = lambda * T::from_count(n);
        for i in 0..n {
            k[(i, i)] += shift;
        }
        let chol = Cholesky::new(k)
            .ok_or_else(|| RfsError::Decomposition("dual ridge system is not positive definite".into()))?;
        values.tr_mul(&chol.solve(y))
    };
    if theta.iter().any(|v| !v.is_finite_value()) {
        return Err(RfsError::NonFinite("ridge solution"));
    }
    Ok(EstimatorState { theta_prev: theta.clone(), theta, iteration: 0, filter, map_id: phi.map_id() })
}

/// How an iterative fit evaluates the gradient `Sigma theta - S^* y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IterationMode {
    /// Cheapest of the three for the requested iteration count.
    #[default]
    Auto,
    /// Two products with `Phi` per step, `O(n D)`.
    Direct,
    /// Precomputed `Phi^T Phi / n`, `O(D^2)` per step after `O(n D^2)` setup.
    Normal,
    /// Iterates on `a` with `theta = Phi^T a`, `O(n^2)` per step after `O(n^2 D)` setup.
    Dual,
}

impl IterationMode {
    /// Resolves `Auto` by flop count for `k` steps on an `n x D` feature matrix.
    pub fn resolve(self, n: usize, d: usize, k: usize) -> IterationMode {
        if self != IterationMode::Auto {
            return self;
        }
        let (n, d, k) = (n as f64, d as f64, k.max(1) as f64);
        let direct = 2.0 * k * n * d;
        let normal = (n + k) * d * d;
        let dual = (d + k) * n * n;
        if normal <= direct && normal <= dual {
            IterationMode::Normal
        } else if dual < direct {
            IterationMode::Dual
        } else {
            IterationMode::Direct
        }
    }
}

enum Gradient<'a, T: Scalar> {
    Direct {
        phi: &'a DMatrix<T>,
        y: &'a DVector<T>,
    },
    Normal {
        cov: DMatrix<T>,
        rhs: DVector<T>,
    },
    /// Gradient in dual coordinates: `(K a - y) / n` with `K = Phi Phi^T`.
    Dual {
        phi: &'a DMatrix<T>,
        gram: DMatrix<T>,
        y: &'a DVector<T>,
    },
}

impl<T: Scalar> Gradient<'_, T> {
    fn eval(&self, u: &DVector<T>) -> DVector<T> {
        match self {
            Gradient::Direct { phi, y } => {
                let resid = *phi * u - *y;
                phi.tr_mul(&resid) / T::from_count(phi.nrows())
            }
            Gradient::Normal { cov, rhs } => cov * u - rhs,
            Gradient::Dual { gram, y, .. } => (gram * u - *y) / T::from_count(gram.nrows()),
        }
    }

    /// `|theta|` for coordinates `u`.
    fn theta_norm(&self, u: &DVector<T>) -> T {
        match self {
            Gradient::Dual { gram, .. } => u.dot(&(gram * u)).max(T::zero()).sqrt(),
            _ => u.norm(),
        }
    }

    fn theta(&self, u: &DVector<T>) -> DVector<T> {
        match self {
            Gradient::Dual { phi, .. } => phi.tr_mul(u),
            _ => u.clone(),
        }
    }
}

/// Stepwise gradient descent / heavy-ball / Nesterov on the feature parameters.
///
/// The momentum recursions are linear, so running them on dual coordinates
/// `a` with `theta = Phi^T a` produces the same iterates.
pub struct IterativeFit<'a, T: Scalar> {
    gradient: Gradient<'a, T>,
    filter: FilterSpec<T>,
    coords: DVector<T>,
    coords_prev: DVector<T>,
    iteration: usize,
    limit: T,
    map_id: Option<u64>,
}

impl<'a, T: Scalar> IterativeFit<'a, T> {
    pub fn new(
        phi: &'a FeatureMatrix<T>,
        y: &'a DVector<T>,
        filter: FilterSpec<T>,
        mode: IterationMode,
    ) -> Result<Self> {
        check_data(phi, y)?;
        if !filter.method().is_iterative() {
            return invalid("iterative fitting needs landweber, heavy-ball or nesterov");
        }
        let values = phi.values();
        let (n, d) = values.shape();
        let (gradient, dim) = match mode.resolve(n, d, filter.iterations()) {
            IterationMode::Normal => {
                (Gradient::Normal { cov: feature_covariance(values), rhs: feature_rhs(values, y) }, d)
            }
            IterationMode::Dual => (Gradient::Dual { phi: values, gram: phi.gram(), y }, n),
            _ => (Gradient::Direct { phi: values, y }, d),
        };
        // |phi(Sigma) S^* y| <= sqrt(D E / lambda) |y| / sqrt(n); allow six orders of slack
        let scale = y.norm() / (T::from_count(n) * filter.lambda()).sqrt();
        let limit = T::lit(1e6) * scale;
        Ok(IterativeFit {
            gradient,
            filter,
            coords: DVector::zeros(dim),
            coords_prev: DVector::zeros(dim),
            iteration: 0,
            limit,
            map_id: phi.map_id(),
        })
    }

    /// One update. Fails on non-finite iterates or when `|theta|` passes the divergence bound.
    pub fn step(&mut self) -> Result<()> {
        let alpha = self.filter.alpha();
        let next = match self.filter.method() {
            FilterMethod::Nesterov => {
                let j = T::from_count(self.iteration);
                let momentum = (j - T::one()) / (j + T::lit(2.0));
                let look = &self.coords + (&self.coords - &self.coords_prev) * momentum;
                let g = self.gradient.eval(&look);
                look - g * alpha
            }
            _ => {
                let g = self.gradient.eval(&self.coords);
                let beta = self.filter.beta();
                &self.coords - g * alpha + (&self.coords - &self.coords_prev) * beta
            }
        };
        self.iteration += 1;
        let norm = self.gradient.theta_norm(&next);
        if !norm.is_finite_value() || next.iter().any(|v| !v.is_finite_value()) {
            return Err(RfsError::Divergence {
                iteration: self.iteration,
                norm: f64::INFINITY,
                limit: self.limit.as_f64(),
            });
        }
        if norm > self.limit {
            return Err(RfsError::Divergence {
                iteration: self.iteration,
                norm: norm.as_f64(),
                limit: self.limit.as_f64(),
            });
        }
        self.coords_prev = std::mem::replace(&mut self.coords, next);
        Ok(())
    }

    /// Steps until `iteration == k` (no-op if already there).
    pub fn run_to(&mut self, k: usize) -> Result<()> {
        while self.iteration < k {
            self.step()?;
        }
        Ok(())
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Current feature-space parameters.
    pub fn theta(&self) -> DVector<T> {
        self.gradient.theta(&self.coords)
    }

    /// Snapshot of the current iterate.
    pub fn state(&self) -> Result<EstimatorState<T>> {
        let filter = if self.iteration == 0 { self.filter } else { self.filter.with_iterations(self.iteration)? };
        Ok(EstimatorState {
            theta: self.theta(),
            theta_prev: self.gradient.theta(&self.coords_prev),
            iteration: self.iteration,
            filter,
            map_id: self.map_id,
        })
    }
}

/// Runs exactly `filter.iterations()` steps from zero.
pub fn fit_rf_iterative<T: Scalar>(
    phi: &FeatureMatrix<T>,
    y: &DVector<T>,
    filter: FilterSpec<T>,
) -> Result<EstimatorState<T>> {
    let mut fit = IterativeFit::new(phi, y, filter, IterationMode::Auto)?;
    fit.run_to(filter.iterations())?;
    fit.state()
}

/// Applies arbitrary filters to one feature-space problem through a single
/// eigendecomposition, primal (`D x D`) or dual (`n x n`), whichever is smaller.
pub struct FeatureSpectralSolver<T: Scalar> {
    route: SpectralRoute<T>,
    map_id: Option<u64>,
}

enum SpectralRoute<T: Scalar> {
    Primal { decomposition: SpectralDecomposition<T>, rhs: DVector<T> },
    Dual { decomposition: SpectralDecomposition<T>, phi: DMatrix<T>, y: DVector<T> },
}

impl<T: Scalar> FeatureSpectralSolver<T> {
    pub fn new(phi: &FeatureMatrix<T>, y: &DVector<T>) -> Result<Self> {
        check_data(phi, y)?;
        let values = phi.values();
        let route = if values.ncols() <= values.nrows() {
            SpectralRoute::Primal {
                decomposition: SpectralDecomposition::of_symmetric(feature_covariance(values))?,
                rhs: feature_rhs(values, y),
            }
        } else {
            SpectralRoute::Dual {
                decomposition: SpectralDecomposition::of_gram(&phi.gram())?,
                phi: values.clone(),
                y: y.clone(),
            }
        };
        Ok(FeatureSpectralSolver { route, map_id: phi.map_id() })
    }

    /// Nonzero spectrum of `Sigma_M`, nonincreasing.
    pub fn spectrum(&self) -> &DVector<T> {
        match &self.route {
            SpectralRoute::Primal { decomposition, .. } | SpectralRoute::Dual { decomposition, .. } => {
                decomposition.eigenvalues()
            }
        }
    }

    /// Largest eigenvalue of `Phi^T Phi / n`.
    pub fn top_eigenvalue(&self) -> T {
        self.spectrum().iter().copied().fold(T::zero(), |a, b| a.max(b))
    }

    pub fn theta(&self, filter: &FilterSpec<T>) -> DVector<T> {
        match &self.route {
            SpectralRoute::Primal { decomposition, rhs } => decomposition.apply_filter(filter, rhs),
            SpectralRoute::Dual { decomposition, phi, y } => {
                let dual = decomposition.apply_filter(filter, y) / T::from_count(phi.nrows());
                phi.tr_mul(&dual)
            }
        }
    }

    pub fn fit(&self, filter: &FilterSpec<T>) -> Result<EstimatorState<T>> {
        let theta = self.theta(filter);
        if theta.iter().any(|v| !v.is_finite_value()) {
            return Err(RfsError::NonFinite("spectral fit"));
        }
        Ok(EstimatorState {
            theta_prev: theta.clone(),
            theta,
            iteration: filter.iterations(),
            filter: *filter,
            map_id: self.map_id,
        })
    }
}

/// Feature-space fit through one eigendecomposition.
pub fn fit_rf_spectral<T: Scalar>(
    phi: &FeatureMatrix<T>,
    y: &DVector<T>,
    filter: &FilterSpec<T>,
) -> Result<EstimatorState<T>> {
    FeatureSpectralSolver::new(phi, y)?.fit(filter)
}

/// Dual coefficients `a = phi(K/n) y / n`, so that `f(x) = sum_i a_i K(x_i, x)`.
pub fn fit_kernel_oracle<T: Scalar>(gram: &DMatrix<T>, y: &DVector<T>, filter: &FilterSpec<T>) -> Result<DVector<T>> {
    fit_kernel_oracle_with_cap(gram, y, filter, DEFAULT_ORACLE_CAP)
}

pub fn fit_kernel_oracle_with_cap<T: Scalar>(
    gram: &DMatrix<T>,
    y: &DVector<T>,
    filter: &FilterSpec<T>,
    cap: usize,
) -> Result<DVector<T>> {
    let n = gram.nrows();
    if !gram.is_square() || n == 0 {
        return invalid("Gram matrix must be square and nonempty");
    }
    if n != y.len() {
        return Err(RfsError::DimensionMismatch { expected: n, found: y.len() });
    }
    if n > cap {
        return invalid(format!("kernel oracle is capped at n = {cap}, got {n}"));
    }
    let scale = gram.amax().max(T::one());
    let asym = (gram - gram.transpose()).amax();
    if asym > T::lit(1e-8) * scale {
        return invalid(format!("Gram matrix is not symmetric (max asymmetry {asym})"));
    }
    let decomposition = SpectralDecomposition::of_gram(gram)?;
    Ok(decomposition.apply_filter(filter, y) / T::from_count(n))
}

/// `f(x_j) = sum_i a_i K(x_i, x_j)` for a cross-kernel block `K[i, j] = K(x_i, x_j)`.
pub fn kernel_predict<T: Scalar>(cross: &DMatrix<T>, dual: &DVector<T>) -> Result<DVector<T>> {
    if cross.nrows() != dual.len() {
        return Err(RfsError::DimensionMismatch { expected: cross.nrows(), found: dual.len() });
    }
    Ok(cross.tr_mul(dual))
}

/// Predictions `Phi(X) theta` on raw inputs.
pub fn predict<T: Scalar>(map: &FeatureMap<T>, state: &EstimatorState<T>, x: &DMatrix<T>) -> Result<DVector<T>> {
    if let Some(id) = state.map_id {
        if id != map.id() {
            return Err(RfsError::FeatureMapMismatch);
        }
    }
    predict_features(&map.apply_features(x)?, state)
}

/// Predictions on an already computed feature matrix.
pub fn predict_features<T: Scalar>(phi: &FeatureMatrix<T>, state: &EstimatorState<T>) -> Result<DVector<T>> {
    if let (Some(a), Some(b)) = (phi.map_id(), state.map_id) {
        if a != b {
            return Err(RfsError::FeatureMapMismatch);
        }
    }
    if phi.ncols() != state.dim() {
        return Err(RfsError::DimensionMismatch { expected: state.dim(), found: phi.ncols() });
    }
    Ok(phi.values() * &state.theta)
}
