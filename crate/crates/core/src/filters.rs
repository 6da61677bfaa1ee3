//! Spectral filter functions.
//!
//! A filter `phi_lambda(t)` regularizes the inverse `1/t` on the spectrum of the
//! empirical covariance; `r_lambda(t) = 1 - t phi_lambda(t)` is its residual.
//! Iterative methods started at zero produce polynomial filters, computed here
//! with two independent recurrences: one for `phi` and one for `r`, so the identity
//! `r + t phi = 1` is a genuine cross-check rather than a definition.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{invalid, Result, RfsError};
use crate::scalar::Scalar;

/// Numerical slack applied to declared constants when gating.
pub const CONSTANT_SLACK: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterMethod {
    Tikhonov,
    Landweber,
    HeavyBall,
    Nesterov,
}

impl FilterMethod {
    pub fn name(&self) -> &'static str {
        match self {
            FilterMethod::Tikhonov => "tikhonov",
            FilterMethod::Landweber => "landweber",
            FilterMethod::HeavyBall => "heavy-ball",
            FilterMethod::Nesterov => "nesterov",
        }
    }

    pub fn is_iterative(&self) -> bool {
        !matches!(self, FilterMethod::Tikhonov)
    }

    /// Accelerated methods regularize at `lambda = 1/k^2`, plain gradient descent at `1/k`.
    pub fn lambda_is_inverse_square(&self) -> bool {
        matches!(self, FilterMethod::HeavyBall | FilterMethod::Nesterov)
    }
}

impl fmt::Display for FilterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterMethod {
    type Err = RfsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tikhonov" | "krr" => Ok(FilterMethod::Tikhonov),
            "landweber" | "gd" | "gradient-descent" => Ok(FilterMethod::Landweber),
            "heavy-ball" | "heavyball" | "hb" => Ok(FilterMethod::HeavyBall),
            "nesterov" => Ok(FilterMethod::Nesterov),
            other => invalid(format!("unknown filter method '{other}'")),
        }
    }
}

/// Constants of the regularization-function definition, where known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredConstants {
    /// Bound on `sup |t phi(t)|`.
    pub d: Option<f64>,
    /// Bound on `sup lambda |phi(t)|`.
    pub e: Option<f64>,
    /// Bound on `sup |r(t)|`.
    pub c0: Option<f64>,
    /// Qualification; `f64::INFINITY` when unbounded.
    pub qualification: Option<f64>,
    method: FilterMethod,
    alpha: f64,
}

impl DeclaredConstants {
    /// Declared `c_q` for `sup |r(t)| t^q <= c_q lambda^q`, if one is known for `q`.
    pub fn c_q(&self, q: f64) -> Option<f64> {
        match self.method {
            FilterMethod::Tikhonov if (0.0..=1.0).contains(&q) => Some(1.0),
            FilterMethod::Landweber if q >= 0.0 => Some(if q == 0.0 { 1.0 } else { (q / self.alpha).powf(q) }),
            _ => None,
        }
    }
}

/// A concrete filter: method, regularization level and iteration parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec<T> {
    method: FilterMethod,
    lambda: T,
    alpha: T,
    beta: T,
    iterations: usize,
    t_max: T,
}

impl<T: Scalar> FilterSpec<T> {
    /// `phi(t) = 1 / (t + lambda)`.
    pub fn tikhonov(lambda: T) -> Result<Self> {
        if !(lambda > T::zero()) || !lambda.is_finite_value() {
            return invalid("tikhonov lambda must be positive and finite");
        }
        Ok(FilterSpec {
            method: FilterMethod::Tikhonov,
            lambda,
            alpha: T::zero(),
            beta: T::zero(),
            iterations: 0,
            t_max: T::one(),
        })
    }

    /// Gradient descent with constant step `alpha`, `k` steps, `lambda = 1/k`.
    pub fn landweber(alpha: T, iterations: usize) -> Result<Self> {
        Self::iterative(FilterMethod::Landweber, alpha, T::zero(), iterations)
    }

    /// Heavy-ball with constant momentum `beta`, `k` steps, `lambda = 1/k^2`.
    pub fn heavy_ball(alpha: T, beta: T, iterations: usize) -> Result<Self> {
        Self::iterative(FilterMethod::HeavyBall, alpha, beta, iterations)
    }

    /// Nesterov acceleration with momentum `(k-1)/(k+2)`, `lambda = 1/k^2`.
    pub fn nesterov(alpha: T, iterations: usize) -> Result<Self> {
        Self::iterative(FilterMethod::Nesterov, alpha, T::zero(), iterations)
    }

    /// Generic constructor; `beta` is ignored by all methods except heavy-ball.
    pub fn iterative(method: FilterMethod, alpha: T, beta: T, iterations: usize) -> Result<Self> {
        Self::iterative_on(method, alpha, beta, iterations, T::one())
    }

    /// Like [`FilterSpec::iterative`] on the spectral interval `(0, t_max]`.
    pub fn iterative_on(method: FilterMethod, alpha: T, beta: T, iterations: usize, t_max: T) -> Result<Self> {
        if !method.is_iterative() {
            return invalid("use FilterSpec::tikhonov for Tikhonov filters");
        }
        if iterations == 0 {
            return invalid("iteration count k must be at least 1");
        }
        if !(alpha > T::zero()) || !alpha.is_finite_value() {
            return invalid("step size alpha must be positive and finite");
        }
        let beta = if method == FilterMethod::HeavyBall { beta } else { T::zero() };
        if !(beta >= T::zero() && beta < T::one()) {
            return invalid("momentum beta must lie in [0, 1)");
        }
        let k = T::from_count(iterations);
        let lambda = if method.lambda_is_inverse_square() { T::one() / (k * k) } else { T::one() / k };
        FilterSpec { method, lambda, alpha, beta, iterations, t_max: T::one() }.with_t_max(t_max)
    }

    /// Sets the upper end of the spectral interval. Iterative filters require `alpha t_max <= 1`.
    pub fn with_t_max(mut self, t_max: T) -> Result<Self> {
        if !(t_max > T::zero()) || !t_max.is_finite_value() {
            return invalid("t_max must be positive and finite");
        }
        self.t_max = t_max;
        self.check_step()?;
        Ok(self)
    }

    fn check_step(&self) -> Result<()> {
        if self.method.is_iterative() && self.alpha * self.t_max > T::one() + T::lit(1e-12) {
            return invalid(format!(
                "step size alpha = {} is inadmissible on (0, {}]: alpha * t_max must not exceed 1",
                self.alpha, self.t_max
            ));
        }
        Ok(())
    }

    pub fn method(&self) -> FilterMethod {
        self.method
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// Iteration count `k`; zero for Tikhonov.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn t_max(&self) -> T {
        self.t_max
    }

    /// Same filter stopped after `k` steps.
    pub fn with_iterations(&self, iterations: usize) -> Result<Self> {
        Self::iterative_on(self.method, self.alpha, self.beta, iterations, self.t_max)
    }

    pub fn declared(&self) -> DeclaredConstants {
        let alpha = self.alpha.as_f64();
        let (d, e, c0, qualification) = match self.method {
            FilterMethod::Tikhonov => (Some(1.0), Some(1.0), Some(1.0), Some(1.0)),
            // t phi = 1 - (1 - alpha t)^k lies in [0, 1] whenever alpha t <= 1
            FilterMethod::Landweber => (Some(1.0), Some(alpha), Some(1.0), Some(f64::INFINITY)),
            FilterMethod::HeavyBall => (Some(2.0), Some(2.0), None, None),
            FilterMethod::Nesterov => (None, None, None, None),
        };
        DeclaredConstants { d, e, c0, qualification, method: self.method, alpha }
    }

    /// `phi(t)` for any `t >= 0`, without domain checks. `phi(0)` is the limit value.
    pub fn phi(&self, t: T) -> T {
        let one = T::one();
        match self.method {
            FilterMethod::Tikhonov => one / (t + self.lambda),
            FilterMethod::Landweber => self.alpha * geometric_sum(one - self.alpha * t, self.iterations),
            FilterMethod::HeavyBall => {
                let a = self.alpha;
                let b = self.beta;
                let c = one + b - a * t;
                let (mut prev, mut cur) = (T::zero(), T::zero());
                for _ in 0..self.iterations {
                    let next = a + c * cur - b * prev;
                    prev = cur;
                    cur = next;
                }
                cur
            }
            FilterMethod::Nesterov => {
                let a = self.alpha;
                let damp = one - a * t;
                let (mut prev, mut cur) = (T::zero(), T::zero());
                for j in 0..self.iterations {
                    let look = cur + nesterov_momentum::<T>(j) * (cur - prev);
                    prev = cur;
                    cur = a + damp * look;
                }
                cur
            }
        }
    }

    /// `r(t) = 1 - t phi(t)` from its own recurrence, for any `t >= 0`.
    pub fn residual(&self, t: T) -> T {
        let one = T::one();
        match self.method {
            FilterMethod::Tikhonov => self.lambda / (t + self.lambda),
            FilterMethod::Landweber => int_pow(one - self.alpha * t, self.iterations),
            FilterMethod::HeavyBall => {
                let c = one + self.beta - self.alpha * t;
                let (mut prev, mut cur) = (one, one);
                for _ in 0..self.iterations {
                    let next = c * cur - self.beta * prev;
                    prev = cur;
                    cur = next;
                }
                cur
            }
            FilterMethod::Nesterov => {
                let damp = one - self.alpha * t;
                let (mut prev, mut cur) = (one, one);
                for j in 0..self.iterations {
                    let look = cur + nesterov_momentum::<T>(j) * (cur - prev);
                    prev = cur;
                    cur = damp * look;
                }
                cur
            }
        }
    }

    fn check_t(&self, t: T) -> Result<()> {
        if !t.is_finite_value() || t <= T::zero() {
            return invalid(format!("spectral value t = {t} must be positive"));
        }
        if t > self.t_max {
            return invalid(format!("spectral value t = {t} exceeds t_max = {}", self.t_max));
        }
        Ok(())
    }
}

/// Momentum `(j - 1) / (j + 2)` of step `j` (zero-based).
fn nesterov_momentum<T: Scalar>(j: usize) -> T {
    (T::from_count(j) - T::one()) / (T::from_count(j) + T::lit(2.0))
}

/// `sum_{j<k} q^j` by binary splitting; no cancellation for `q` in `[0, 1]`.
fn geometric_sum<T: Scalar>(q: T, k: usize) -> T {
    let mut sum = T::zero();
    let mut pow = T::one();
    let mut block_sum = T::one();
    let mut block_pow = q;
    let mut rest = k;
    while rest > 0 {
        if rest & 1 == 1 {
            sum += pow * block_sum;
            pow *= block_pow;
        }
        block_sum *= T::one() + block_pow;
        block_pow *= block_pow;
        rest >>= 1;
    }
    sum
}

fn int_pow<T: Scalar>(base: T, mut exp: usize) -> T {
    let mut result = T::one();
    let mut b = base;
    while exp > 0 {
        if exp & 1 == 1 {
            result *= b;
        }
        b *= b;
        exp >>= 1;
    }
    result
}

/// `phi_lambda(t)` for `t` in `(0, t_max]`.
pub fn filter_value<T: Scalar>(spec: &FilterSpec<T>, t: T) -> Result<T> {
    spec.check_t(t)?;
    Ok(spec.phi(t))
}

/// `r_lambda(t)` for `t` in `(0, t_max]`.
pub fn residual_value<T: Scalar>(spec: &FilterSpec<T>, t: T) -> Result<T> {
    spec.check_t(t)?;
    Ok(spec.residual(t))
}

/// A filter method with fixed step and momentum; the regularization level is free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterFamily<T> {
    pub method: FilterMethod,
    pub alpha: T,
    pub beta: T,
    pub t_max: T,
}

impl<T: Scalar> FilterFamily<T> {
    pub fn new(method: FilterMethod, alpha: T, beta: T) -> Self {
        FilterFamily { method, alpha, beta, t_max: T::one() }
    }

    /// Member at regularization level `lambda`. Iterative methods round to the
    /// nearest admissible `k`, so the realized `lambda` may differ slightly.
    pub fn at_lambda(&self, lambda: T) -> Result<FilterSpec<T>> {
        if !(lambda > T::zero()) {
            return invalid("lambda must be positive");
        }
        let spec = match self.method {
            FilterMethod::Tikhonov => FilterSpec::tikhonov(lambda)?,
            m => {
                let inv = if m.lambda_is_inverse_square() { T::one() / lambda.sqrt() } else { T::one() / lambda };
                let k = inv.round().as_f64().max(1.0) as usize;
                FilterSpec::iterative(m, self.alpha, self.beta, k)?
            }
        };
        spec.with_t_max(self.t_max)
    }
}

/// One `(lambda, q)` row of a filter verification.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRow {
    pub method: FilterMethod,
    pub lambda: f64,
    pub iterations: usize,
    pub q: Option<f64>,
    pub sup_tphi: f64,
    pub sup_lamphi: f64,
    pub sup_resid: f64,
    pub emp_cq: Option<f64>,
    /// `None` when none of the row's quantities has a declared bound.
    pub pass: Option<bool>,
}

/// Empirical filter constants over a `(t, lambda)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub method: FilterMethod,
    pub declared: DeclaredConstants,
    pub rows: Vec<FilterRow>,
}

impl FilterReport {
    /// True when every gated row passes.
    pub fn all_gated_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass != Some(false))
    }

    pub fn max_sup_tphi(&self) -> f64 {
        self.rows.iter().map(|r| r.sup_tphi).fold(0.0, f64::max)
    }

    pub fn max_sup_lamphi(&self) -> f64 {
        self.rows.iter().map(|r| r.sup_lamphi).fold(0.0, f64::max)
    }

    pub fn max_sup_resid(&self) -> f64 {
        self.rows.iter().map(|r| r.sup_resid).fold(0.0, f64::max)
    }

    /// Largest empirical `c_q` over the lambda grid for this `q`.
    pub fn max_emp_cq(&self, q: f64) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.q == Some(q))
            .filter_map(|r| r.emp_cq)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }

    /// CSV with columns `method,lambda,q,sup_tphi,sup_lamphi,sup_resid,emp_cq,pass`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "lambda", "q", "sup_tphi", "sup_lamphi", "sup_resid", "emp_cq", "pass"])?;
        for r in &self.rows {
            w.write_record([
                r.method.name().to_string(),
                r.lambda.to_string(),
                r.q.map(|q| q.to_string()).unwrap_or_default(),
                r.sup_tphi.to_string(),
                r.sup_lamphi.to_string(),
                r.sup_resid.to_string(),
                r.emp_cq.map(|v| v.to_string()).unwrap_or_default(),
                r.pass.map(|p| p.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates the defining suprema of a filter family on a grid.
///
/// For every `lambda` in the grid (deduplicated after rounding to an iteration
/// count) and every `q`, reports `sup_t |t phi|`, `sup_t lambda |phi|`,
/// `sup_t |r|` and `sup_t |r| t^q / lambda^q`, gated against the declared
/// constants with 1% slack.
pub fn verify_filter<T: Scalar>(
    family: &FilterFamily<T>,
    t_grid: &[T],
    lambda_grid: &[T],
    q_list: &[f64],
) -> Result<FilterReport> {
    if t_grid.is_empty() || lambda_grid.is_empty() {
        return invalid("verification grids must be nonempty");
    }
    if t_grid.iter().chain(lambda_grid).any(|&v| !(v > T::zero() && v <= T::one())) {
        return invalid("grid values must lie in (0, 1]");
    }
    if q_list.iter().any(|&q| !(q >= 0.0) || !q.is_finite()) {
        return invalid("q values must be finite and nonnegative");
    }
    let mut specs: Vec<FilterSpec<T>> = Vec::with_capacity(lambda_grid.len());
    for &l in lambda_grid {
        let s = family.at_lambda(l)?;
        if !specs.iter().any(|p| p.lambda == s.lambda) {
            specs.push(s);
        }
    }
    specs.sort_by(|a, b| b.lambda.partial_cmp(&a.lambda).unwrap_or(std::cmp::Ordering::Equal));
    let declared = specs[0].declared();
    let slack = CONSTANT_SLACK;
    let mut rows = Vec::new();
    for spec in &specs {
        let lambda = spec.lambda.as_f64();
        let mut sup_tphi = 0.0f64;
        let mut sup_lamphi = 0.0f64;
        let mut sup_resid = 0.0f64;
        let mut sup_weighted = vec![0.0f64; q_list.len()];
        for &t in t_grid {
            let phi = spec.phi(t).as_f64();
            let r = spec.residual(t).as_f64();
            let tf = t.as_f64();
            sup_tphi = sup_tphi.max((tf * phi).abs());
            sup_lamphi = sup_lamphi.max(lambda * phi.abs());
            sup_resid = sup_resid.max(r.abs());
            for (s, &q) in sup_weighted.iter_mut().zip(q_list) {
                *s = s.max(r.abs() * tf.powf(q));
            }
        }
        let base_gates = [
            declared.d.map(|d| sup_tphi <= d * slack),
            declared.e.map(|e| sup_lamphi <= e * slack),
            declared.c0.map(|c| sup_resid <= c * slack),
        ];
        let make_row = |q: Option<f64>, emp_cq: Option<f64>, extra: Option<bool>| {
            let gates: Vec<bool> = base_gates.iter().chain(std::iter::once(&extra)).flatten().copied().collect();
            FilterRow {
                method: spec.method,
                lambda,
                iterations: spec.iterations,
                q,
                sup_tphi,
                sup_lamphi,
                sup_resid,
                emp_cq,
                pass: if gates.is_empty() { None } else { Some(gates.iter().all(|&g| g)) },
            }
        };
        if q_list.is_empty() {
            rows.push(make_row(None, None, None));
        }
        for (&q, &s) in q_list.iter().zip(&sup_weighted) {
            let emp = s / lambda.powf(q);
            let gate = declared.c_q(q).map(|c| emp <= c * slack);
            rows.push(make_row(Some(q), Some(emp), gate));
        }
    }
    Ok(FilterReport { method: family.method, declared, rows })
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid<T: Scalar>(lo: f64, hi: f64, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![T::lit(hi)],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    let v = if i + 1 == n { hi } else { (a + (b - a) * i as f64 / (n - 1) as f64).exp() };
                    T::lit(v)
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn tikhonov_value() {
        let s = FilterSpec::tikhonov(0.5).unwrap();
        assert_relative_eq!(filter_value(&s, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn landweber_two_terms() {
        let s = FilterSpec::landweber(1.0, 2).unwrap();
        assert_relative_eq!(filter_value(&s, 0.5).unwrap(), 1.5, epsilon = 1e-15);
        assert_eq!(s.lambda(), 0.5);
    }

    #[test]
    fn landweber_residual_cube() {
        let s = FilterSpec::landweber(1.0, 3).unwrap();
        assert_relative_eq!(residual_value(&s, 0.5).unwrap(), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn heavy_ball_residual_by_hand() {
        // r2 = (1 + b - a t) r1 - b r0 = (1.25 - 0.5) * 0.5 - 0.25 * 1
        let s = FilterSpec::heavy_ball(1.0, 0.25, 2).unwrap();
        assert_relative_eq!(residual_value(&s, 0.5).unwrap(), 0.125, epsilon = 1e-15);
        assert_relative_eq!(s.lambda(), 0.25);
    }

    #[test]
    fn residual_tends_to_one_at_zero() {
        let specs = [
            FilterSpec::tikhonov(0.1).unwrap(),
            FilterSpec::landweber(0.7, 9).unwrap(),
            FilterSpec::heavy_ball(0.5, 0.6, 9).unwrap(),
            FilterSpec::nesterov(0.5, 9).unwrap(),
        ];
        for s in specs {
            assert!((residual_value::<f64>(&s, 1e-12).unwrap() - 1.0).abs() < 1e-9, "{:?}", s.method());
        }
    }

    #[test]
    fn landweber_limit_at_zero() {
        let s = FilterSpec::landweber(0.3, 17).unwrap();
        assert_relative_eq!(s.phi(0.0), 17.0 * 0.3, epsilon = 1e-12);
    }

    #[test]
    fn heavy_ball_without_momentum_is_landweber() {
        let t_grid: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        for alpha in [0.2, 0.5, 1.0] {
            for k in [1usize, 2, 7, 40] {
                let hb = FilterSpec::heavy_ball(alpha, 0.0, k).unwrap();
                let gd = FilterSpec::landweber(alpha, k).unwrap();
                for &t in &t_grid {
                    assert!((hb.phi(t) - gd.phi(t)).abs() <= 1e-12 * gd.phi(t).abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn rejects_bad_domain_and_parameters() {
        let s = FilterSpec::tikhonov(0.5).unwrap();
        assert!(filter_value(&s, 0.0).is_err());
        assert!(filter_value(&s, -1.0).is_err());
        assert!(residual_value(&s, 1.5).is_err());
        assert!(FilterSpec::<f64>::tikhonov(0.0).is_err());
        assert!(FilterSpec::<f64>::landweber(1.5, 3).is_err());
        assert!(FilterSpec::<f64>::landweber(0.5, 0).is_err());
        assert!(FilterSpec::<f64>::heavy_ball(0.5, 1.0, 3).is_err());
        assert!(FilterSpec::landweber(0.5, 3).unwrap().with_t_max(4.0).is_err());
        assert!(FilterSpec::landweber(0.25, 3).unwrap().with_t_max(4.0).is_ok());
        let fam = FilterFamily::new(FilterMethod::Landweber, 0.5, 0.0);
        assert!(verify_filter::<f64>(&fam, &[], &[0.5], &[1.0]).is_err());
        assert!(verify_filter::<f64>(&fam, &[0.5], &[], &[1.0]).is_err());
    }

    #[test]
    fn landweber_matches_closed_form() {
        for alpha in [0.1, 0.5, 1.0] {
            for k in [1usize, 3, 50, 999] {
                let s = FilterSpec::landweber(alpha, k).unwrap();
                for i in 1..=200 {
                    let t = i as f64 / 200.0;
                    let closed = (1.0 - (1.0 - alpha * t).powi(k as i32)) / t;
                    assert_relative_eq!(s.phi(t), closed, max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn monotone_residuals() {
        let t_grid: Vec<f64> = log_grid(1e-4, 1.0, 400);
        for s in [FilterSpec::tikhonov(0.01).unwrap(), FilterSpec::landweber(0.8, 25).unwrap()] {
            let r: Vec<f64> = t_grid.iter().map(|&t| s.residual(t)).collect();
            assert!(r.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{:?}", s.method());
        }
    }

    #[test]
    fn tikhonov_constants_hold() {
        let fam = FilterFamily::new(FilterMethod::Tikhonov, 0.0, 0.0);
        let report =
            verify_filter(&fam, &log_grid::<f64>(1e-4, 1.0, 300), &log_grid(1e-3, 1.0, 100), &[0.0, 0.5, 1.0]).unwrap();
        assert!(report.all_gated_pass());
        assert!(report.max_sup_tphi() <= 1.0);
        assert!(report.max_emp_cq(0.5).unwrap() <= 1.0);
    }

    #[test]
    fn tikhonov_saturates_beyond_one() {
        let fam = FilterFamily::new(FilterMethod::Tikhonov, 0.0, 0.0);
        let report = verify_filter(&fam, &log_grid::<f64>(1e-4, 1.0, 300), &log_grid(1e-3, 1.0, 50), &[2.0]).unwrap();
        assert!(report.max_emp_cq(2.0).unwrap() > 10.0);
        // no declared c_2: the row is reported but not gated on it
        assert!(report.all_gated_pass());
    }

    #[test]
    fn report_csv_layout() {
        let fam = FilterFamily::new(FilterMethod::Landweber, 0.5, 0.0);
        let report = verify_filter(&fam, &[0.5, 1.0], &[0.5], &[1.0]).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "method,lambda,q,sup_tphi,sup_lamphi,sup_resid,emp_cq,pass");
        assert!(lines.next().unwrap().starts_with("landweber,0.5,1,"));
    }

    #[test]
    fn f32_filters_agree_with_f64() {
        let a = FilterSpec::<f32>::heavy_ball(0.5, 0.3, 12).unwrap();
        let b = FilterSpec::<f64>::heavy_ball(0.5, 0.3, 12).unwrap();
        for i in 1..=10 {
            let t = i as f64 / 10.0;
            assert!((a.phi(t as f32) as f64 - b.phi(t)).abs() < 1e-4);
        }
    }

    proptest! {
        #[test]
        fn residual_plus_t_phi_is_one(
            method in prop_oneof![
                Just(FilterMethod::Tikhonov),
                Just(FilterMethod::Landweber),
                Just(FilterMethod::HeavyBall),
                Just(FilterMethod::Nesterov)
            ],
            alpha in 0.05f64..1.0,
            beta in 0.0f64..0.95,
            k in 1usize..200,
            t in 1e-6f64..1.0,
        ) {
            let spec = match method {
                FilterMethod::Tikhonov => FilterSpec::tikhonov(1.0 / k as f64).unwrap(),
                m => FilterSpec::iterative(m, alpha, beta, k).unwrap(),
            };
            let lhs = spec.residual(t) + t * spec.phi(t);
            prop_assert!((lhs - 1.0).abs() <= 1e-10, "{} at t={} gives {}", method, t, lhs);
        }
    }
}
