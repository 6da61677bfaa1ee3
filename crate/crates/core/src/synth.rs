//! Synthetic regression on the circle with an exactly known kernel spectrum.
//!
//! The model kernel is `K(x, x') = sum_j 2 l_j cos(j (x - x'))` on `[0, 2 pi]`
//! with uniform inputs, so the integral operator has eigenfunctions
//! `sqrt(2) cos(j x)`, `sqrt(2) sin(j x)` and eigenvalues `l_j = j^{-1/b}`.
//! The target is `g = L^r h` with `|h| = R`, whose coefficients are known in
//! closed form; the L2 error of any estimate in that span follows from Parseval.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result, RfsError};
use crate::featuremaps::{FeatureMap, KernelOracle};
use crate::ingest::{DataSource, Dataset, Task};
use crate::scalar::Scalar;
use crate::seed::StableHasher;
use crate::spectrum;

/// Frequency count large enough that truncation bias stays below the noise floor.
pub fn default_frequency_count(n_max: usize) -> usize {
    200.max((10.0 * (n_max as f64).sqrt()).ceil() as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticModel<T: Scalar> {
    b: T,
    r: T,
    noise_sigma: T,
    eigenvalues: Vec<T>,
    /// Coefficients of `h`.
    h_cos: Vec<T>,
    h_sin: Vec<T>,
    /// Cached target coefficients `l_j^r (c_j, s_j)`.
    g_cos: Vec<T>,
    g_sin: Vec<T>,
    seed: u64,
    id: u64,
}

fn validate_shape<T: Scalar>(j_max: usize, b: T, r: T, noise_sigma: T) -> Result<()> {
    if j_max == 0 {
        return invalid("model needs J >= 1 frequencies");
    }
    if !(b > T::zero() && b <= T::one()) {
        return invalid("capacity exponent b must lie in (0, 1]");
    }
    if !(r > T::zero()) || !r.is_finite_value() {
        return invalid("source exponent r must be positive");
    }
    if !(T::lit(2.0) * r + b > T::one()) {
        return invalid("2r + b must exceed 1");
    }
    if !(noise_sigma >= T::zero()) || !noise_sigma.is_finite_value() {
        return invalid("noise sigma must be nonnegative and finite");
    }
    Ok(())
}

/// Draws `h` coefficients i.i.d. normal and rescales them to norm `R` exactly.
pub fn build_model<T: Scalar>(
    j_max: usize,
    b: T,
    r: T,
    source_norm: T,
    noise_sigma: T,
    seed: u64,
) -> Result<SyntheticModel<T>> {
    validate_shape(j_max, b, r, noise_sigma)?;
    if !(source_norm > T::zero()) || !source_norm.is_finite_value() {
        return invalid("source norm R must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..2 * j_max).map(|_| rng.sample(StandardNormal)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = source_norm.as_f64() / norm;
    let h_cos = raw[..j_max].iter().map(|v| T::lit(v * scale)).collect();
    let h_sin = raw[j_max..].iter().map(|v| T::lit(v * scale)).collect();
    SyntheticModel::assemble(b, r, noise_sigma, j_max, h_cos, h_sin, seed)
}

impl<T: Scalar> SyntheticModel<T> {
    /// Model with explicit `h` coefficients.
    pub fn with_coefficients(b: T, r: T, noise_sigma: T, h_cos: Vec<T>, h_sin: Vec<T>) -> Result<Self> {
        if h_cos.len() != h_sin.len() {
            return Err(RfsError::DimensionMismatch { expected: h_cos.len(), found: h_sin.len() });
        }
        validate_shape(h_cos.len(), b, r, noise_sigma)?;
        if h_cos.iter().chain(&h_sin).any(|v| !v.is_finite_value()) {
            return Err(RfsError::NonFinite("model coefficients"));
        }
        let j_max = h_cos.len();
        Self::assemble(b, r, noise_sigma, j_max, h_cos, h_sin, 0)
    }

    fn assemble(b: T, r: T, noise_sigma: T, j_max: usize, h_cos: Vec<T>, h_sin: Vec<T>, seed: u64) -> Result<Self> {
        let decay = -T::one() / b;
        let eigenvalues: Vec<T> = (1..=j_max).map(|j| T::from_count(j).powf(decay)).collect();
        let weights: Vec<T> = eigenvalues.iter().map(|&l| l.powf(r)).collect();
        let g_cos = h_cos.iter().zip(&weights).map(|(&c, &w)| c * w).collect();
        let g_sin = h_sin.iter().zip(&weights).map(|(&v, &w)| v * w).collect();
        let mut model = SyntheticModel { b, r, noise_sigma, eigenvalues, h_cos, h_sin, g_cos, g_sin, seed, id: 0 };
        let mut h = StableHasher::new(0x7379_6e74_6800);
        h.write_f64(b.as_f64());
        h.write_f64(r.as_f64());
        h.write_f64(noise_sigma.as_f64());
        h.write_u64(seed);
        model.h_cos.iter().chain(&model.h_sin).for_each(|v| h.write_f64(v.as_f64()));
        model.id = h.finish();
        Ok(model)
    }

    /// Same model with every `h` coefficient multiplied by `c`.
    pub fn scaled(&self, c: T) -> Result<Self> {
        let h_cos = self.h_cos.iter().map(|&v| v * c).collect();
        let h_sin = self.h_sin.iter().map(|&v| v * c).collect();
        Self::assemble(self.b, self.r, self.noise_sigma, self.frequencies(), h_cos, h_sin, self.seed)
    }

    pub fn frequencies(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn b(&self) -> T {
        self.b
    }

    pub fn r(&self) -> T {
        self.r
    }

    pub fn noise_sigma(&self) -> T {
        self.noise_sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// `l_1 >= ... >= l_J` with `l_1 = 1`.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// `(c_j, s_j)`, the coefficients of `h`.
    pub fn source_coefficients(&self) -> (&[T], &[T]) {
        (&self.h_cos, &self.h_sin)
    }

    /// `|h|`.
    pub fn source_norm(&self) -> T {
        self.h_cos.iter().chain(&self.h_sin).fold(T::zero(), |a, &v| a + v * v).sqrt()
    }

    /// Coefficients `(l_j^r c_j, l_j^r s_j)` of the target in the orthonormal basis.
    pub fn target_coefficients(&self) -> (Vec<T>, Vec<T>) {
        (self.g_cos.clone(), self.g_sin.clone())
    }

    /// `|g|_{L2}`.
    pub fn target_norm(&self) -> T {
        self.g_cos.iter().chain(&self.g_sin).fold(T::zero(), |a, &v| a + v * v).sqrt()
    }

    pub fn true_target(&self, x: T) -> T {
        let (c, s) = (&self.g_cos, &self.g_sin);
        let sqrt2 = T::lit(2.0).sqrt();
        let mut total = T::zero();
        for j in 0..self.frequencies() {
            let arg = T::from_count(j + 1) * x;
            total += c[j] * arg.cos() + s[j] * arg.sin();
        }
        sqrt2 * total
    }

    /// `|g - f|_{L2}` for `f` given by `2 J` basis coefficients, cosines first.
    pub fn analytic_l2_error(&self, coefficients: &[T]) -> Result<T> {
        let j_max = self.frequencies();
        if coefficients.len() != 2 * j_max {
            return Err(RfsError::DimensionMismatch { expected: 2 * j_max, found: coefficients.len() });
        }
        let sq =
            self.g_cos.iter().chain(&self.g_sin).zip(coefficients).fold(T::zero(), |a, (&t, &e)| a + (t - e) * (t - e));
        Ok(sq.sqrt())
    }

    /// L2 error of the model-Fourier estimate `x -> Phi(x) theta`.
    pub fn l2_error_of(&self, map: &FeatureMap<T>, theta: &DVector<T>) -> Result<T> {
        let (cos, sin) = map.fourier_coefficients(theta)?;
        if cos.len() != self.frequencies() {
            return Err(RfsError::DimensionMismatch { expected: self.frequencies(), found: cos.len() });
        }
        let mut all = cos;
        all.extend(sin);
        self.analytic_l2_error(&all)
    }

    /// Model-Fourier features for this spectrum.
    pub fn model_features(&self, features: usize, seed: u64) -> Result<FeatureMap<T>> {
        FeatureMap::model_fourier(&self.eigenvalues, features, seed)
    }

    pub fn oracle(&self) -> KernelOracle<T> {
        KernelOracle::ModelFourier { eigenvalues: self.eigenvalues.clone() }
    }

    /// `sum_j 2 l_j / (l_j + lambda)`: each eigenvalue carries a cosine and a sine.
    pub fn effective_dimension(&self, lambda: T) -> Result<T> {
        Ok(T::lit(2.0) * spectrum::effective_dimension(&self.eigenvalues, lambda)?)
    }

    /// Operator spectrum with multiplicities, nonincreasing.
    pub fn operator_spectrum(&self) -> Vec<T> {
        self.eigenvalues.iter().flat_map(|&l| [l, l]).collect()
    }

    /// Smallest `c_b` with `N(lambda) <= c_b lambda^{-b}` on a log grid over `[lo, hi]`.
    pub fn capacity_constant(&self, lo: f64, hi: f64) -> Result<T> {
        spectrum::capacity_constant(&self.operator_spectrum(), self.b, lo, hi, 241)
    }

    /// One row per frequency: `j, eig_j, c_j, s_j`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["j", "eig_j", "c_j", "s_j"])?;
        for j in 0..self.frequencies() {
            w.write_record([
                (j + 1).to_string(),
                self.eigenvalues[j].to_string(),
                self.h_cos[j].to_string(),
                self.h_sin[j].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n` inputs uniform on `[0, 2 pi]` with responses `g(x) + N(0, sigma^2)`.
pub fn sample_synthetic<T: Scalar>(model: &SyntheticModel<T>, n: usize, seed: u64) -> Result<Dataset<T>> {
    if n == 0 {
        return invalid("sample size must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = model.noise_sigma.as_f64();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = T::lit(rng.random_range(0.0..2.0 * PI));
        let eps: f64 = rng.sample(StandardNormal);
        xs.push(x);
        ys.push(model.true_target(x) + T::lit(sigma * eps));
    }
    Dataset::new(
        DMatrix::from_vec(n, 1, xs),
        DVector::from_vec(ys),
        DataSource::Synthetic { model_id: model.id, seed },
        Task::Regression,
    )
}
