//! Effective dimension, spectral decay fits and the theoretical `(lambda, M, k)` schedule.

use crate::error::{invalid, Result, RfsError};
use crate::filters::FilterMethod;
use crate::scalar::Scalar;

/// `N(lambda) = sum_i mu_i / (mu_i + lambda)`.
pub fn effective_dimension<T: Scalar>(eigs: &[T], lambda: T) -> Result<T> {
    if !(lambda > T::zero()) || !lambda.is_finite_value() {
        return invalid("effective dimension needs lambda > 0");
    }
    let mut total = T::zero();
    for &mu in eigs {
        if !(mu >= T::zero()) || !mu.is_finite_value() {
            return invalid("eigenvalues must be nonnegative and finite");
        }
        total += mu / (mu + lambda);
    }
    Ok(total)
}

/// Smallest `c` with `N(lambda) <= c lambda^{-b}` on a log grid of `points` values in `[lo, hi]`.
pub fn capacity_constant<T: Scalar>(eigs: &[T], b: T, lo: f64, hi: f64, points: usize) -> Result<T> {
    if !(lo > 0.0 && hi >= lo) || points == 0 {
        return invalid("capacity grid needs 0 < lo <= hi and at least one point");
    }
    let mut best = T::zero();
    for i in 0..points {
        let frac = if points == 1 { 0.0 } else { i as f64 / (points - 1) as f64 };
        let lambda = T::lit((lo.ln() + frac * (hi.ln() - lo.ln())).exp());
        best = best.max(effective_dimension(eigs, lambda)? * lambda.powf(b));
    }
    Ok(best)
}

/// Ordinary least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero for two points or an exact fit.
    pub slope_stderr: f64,
    pub points: usize,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(RfsError::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return invalid("a line fit needs at least two points");
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(RfsError::NonFinite("line fit data"));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return invalid("line fit needs at least two distinct abscissae");
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        (sse / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit { slope, intercept, slope_stderr, points: n })
}

/// Result of a power-law fit `mu_i ~ i^{-1/b}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub b_hat: f64,
    pub line: LineFit,
    /// 1-based inclusive index window actually used.
    pub window: (usize, usize),
}

pub const MIN_DECAY_POINTS: usize = 10;

/// Default 1-based window `[5, len / 4]`.
pub fn default_decay_window(len: usize) -> (usize, usize) {
    (5, len / 4)
}

/// Least-squares slope of `log mu_i` against `log i` (eigenvalues sorted nonincreasing
/// first) over a 1-based inclusive window; `b_hat = -1 / slope`.
pub fn fit_spectral_decay<T: Scalar>(eigs: &[T], window: Option<(usize, usize)>) -> Result<DecayFit> {
    let mut sorted: Vec<f64> = eigs.iter().map(|v| v.as_f64()).collect();
    if sorted.iter().any(|v| v.is_nan()) {
        return Err(RfsError::NonFinite("eigenvalues"));
    }
    sorted.sort_by(|a, b| b.total_cmp(a));
    let (lo, hi) = window.unwrap_or_else(|| default_decay_window(sorted.len()));
    if lo == 0 || hi > sorted.len() || hi < lo || hi - lo + 1 < MIN_DECAY_POINTS {
        return invalid(format!(
            "decay window [{lo}, {hi}] must hold at least {MIN_DECAY_POINTS} of the {} eigenvalues",
            sorted.len()
        ));
    }
    let mut xs = Vec::with_capacity(hi - lo + 1);
    let mut ys = Vec::with_capacity(hi - lo + 1);
    for i in lo..=hi {
        let mu = sorted[i - 1];
        if !(mu > 0.0) || !mu.is_finite() {
            return invalid(format!("eigenvalue {i} in the decay window is not positive"));
        }
        xs.push((i as f64).ln());
        ys.push(mu.ln());
    }
    let line = fit_line(&xs, &ys)?;
    if !(line.slope < 0.0) {
        return invalid("eigenvalues in the window do not decay");
    }
    Ok(DecayFit { b_hat: -1.0 / line.slope, line, window: (lo, hi) })
}

/// Regularity and capacity assumptions plus the free schedule constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams<T> {
    /// Source smoothness `r > 0`.
    pub r: T,
    /// Effective-dimension exponent `b` in `[0, 1]`.
    pub b: T,
    pub source_norm: T,
    pub c_b: T,
    pub c_lambda: T,
    pub c_m: T,
    pub delta: T,
}

impl<T: Scalar> TheoryParams<T> {
    /// All constants default to 1 and `delta` to 0.05.
    pub fn new(r: T, b: T) -> Result<Self> {
        let p = TheoryParams {
            r,
            b,
            source_norm: T::one(),
            c_b: T::one(),
            c_lambda: T::one(),
            c_m: T::one(),
            delta: T::lit(0.05),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_constants(mut self, c_lambda: T, c_m: T) -> Result<Self> {
        self.c_lambda = c_lambda;
        self.c_m = c_m;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: T| v > T::zero() && v.is_finite_value();
        if !positive(self.r) {
            return invalid("source smoothness r must be positive");
        }
        if !(self.b >= T::zero() && self.b <= T::one()) {
            return invalid("capacity exponent b must lie in [0, 1]");
        }
        if !(T::lit(2.0) * self.r + self.b > T::one()) {
            return invalid("2r + b must exceed 1");
        }
        for (name, v) in [("R", self.source_norm), ("c_b", self.c_b), ("C_lambda", self.c_lambda), ("C_M", self.c_m)] {
            if !positive(v) {
                return invalid(format!("{name} must be positive and finite"));
            }
        }
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return invalid("delta must lie in (0, 1)");
        }
        Ok(())
    }

    /// `-r / (2r + b)`, the predicted slope of log error against log n.
    pub fn error_slope(&self) -> T {
        -self.r / (T::lit(2.0) * self.r + self.b)
    }

    /// Smallest admissible sample size `exp((2r + b) / (2r + b - 1))`.
    pub fn n0(&self) -> T {
        let s = T::lit(2.0) * self.r + self.b;
        (s / (s - T::one())).exp()
    }
}

/// Exponent `e` in `M ~ log(n) n^e`.
pub fn feature_exponent<T: Scalar>(r: T, b: T) -> T {
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let denom = two * r + b;
    if r < half {
        T::one() / denom
    } else if r <= T::one() {
        (T::one() + b * (two * r - T::one())) / denom
    } else {
        two * r / denom
    }
}

/// Regularization, feature count and iteration counts for one sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule<T> {
    pub n: usize,
    pub lambda: T,
    pub features: usize,
    /// `ceil(1 / lambda)`, for gradient descent.
    pub iterations_linear: usize,
    /// `ceil(1 / sqrt(lambda))`, for accelerated methods.
    pub iterations_quadratic: usize,
}

impl<T: Scalar> Schedule<T> {
    /// Iteration count matching the method's `lambda`-to-`k` convention; zero for Tikhonov.
    pub fn iterations_for(&self, method: FilterMethod) -> usize {
        match method {
            FilterMethod::Tikhonov => 0,
            m if m.lambda_is_inverse_square() => self.iterations_quadratic,
            _ => self.iterations_linear,
        }
    }
}

/// `lambda = C_lambda n^{-1/(2r+b)}`, `M = ceil(C_M ln(n) n^e)`.
pub fn theory_schedule<T: Scalar>(n: usize, params: &TheoryParams<T>) -> Result<Schedule<T>> {
    params.validate()?;
    let n0 = params.n0();
    if T::from_count(n) < n0 {
        return Err(RfsError::SampleSizeTooSmall { n, n0: n0.as_f64() });
    }
    let nf = T::from_count(n);
    let lambda = params.c_lambda * nf.powf(-T::one() / (T::lit(2.0) * params.r + params.b));
    let m = params.c_m * nf.ln() * nf.powf(feature_exponent(params.r, params.b));
    let to_count = |v: T, what: &str| -> Result<usize> {
        let v = v.as_f64().ceil();
        if !(v.is_finite() && v < usize::MAX as f64) {
            return invalid(format!("{what} overflows"));
        }
        Ok((v as usize).max(1))
    };
    Ok(Schedule {
        n,
        lambda,
        features: to_count(m, "feature count")?,
        iterations_linear: to_count(T::one() / lambda, "iteration count")?,
        iterations_quadratic: to_count(T::one() / lambda.sqrt(), "iteration count")?,
    })
}
