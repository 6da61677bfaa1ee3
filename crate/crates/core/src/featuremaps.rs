//! Random feature maps and their limit kernels.
//!
//! A kernel with integral representation
//! `K(x, x') = sum_i E_w[ phi_i(x, w) phi_i(x', w) ]` over `p` feature families is
//! approximated by drawing `M` parameters `w_1..w_M` and stacking the scaled
//! features `M^{-1/2} phi_i(x, w_m)`. The inner product of two stacked rows is the
//! random-feature kernel `K_M`, an unbiased Monte-Carlo estimate of `K`.
//!
//! Three families are provided:
//!
//! * Gaussian random Fourier features, `sqrt(2) cos(w.x + b)` with `w ~ N(0, I / s^2)`
//!   and `b ~ U[0, 2 pi)`, approximating `exp(-|x - x'|^2 / (2 s^2))`;
//! * neural tangent features of a one hidden layer network (`p = d + 2` families
//!   built from the activation and its derivative);
//! * Fourier features of a synthetic model kernel `sum_j 2 l_j cos(j (x - x'))`,
//!   sampled by [`crate::synth::SyntheticModel::model_features`].
//!
//! Row layout is family-major: columns `[i * M, (i + 1) * M)` hold family `i`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result, RfsError};
use crate::scalar::Scalar;
use crate::seed::StableHasher;

/// Activation of the hidden layer used by neural tangent features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// Logistic sigmoid. Smooth with Lipschitz second derivative.
    Sigmoid,
    /// Rectified linear unit, with derivative `1{z > 0}`. Admits a closed form limit kernel.
    Relu,
    /// User supplied activation. Bounds are required to certify `kappa^2`.
    Custom(CustomActivation),
}

/// Activation given by plain function pointers. Equality compares the name and bounds.
#[derive(Debug, Clone, Copy)]
pub struct CustomActivation {
    pub name: &'static str,
    pub value: fn(f64) -> f64,
    pub derivative: Option<fn(f64) -> f64>,
    /// Upper bound on `|sigma(z)|` over all `z`.
    pub value_bound: f64,
    /// Upper bound on `|sigma'(z)|` over all `z`.
    pub derivative_bound: f64,
}

impl PartialEq for CustomActivation {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.derivative.is_some() == other.derivative.is_some()
            && self.value_bound == other.value_bound
            && self.derivative_bound == other.derivative_bound
    }
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Custom(c) => c.name,
        }
    }

    pub fn value<T: Scalar>(&self, z: T) -> T {
        match self {
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
            Activation::Relu => z.max(T::zero()),
            Activation::Custom(c) => T::lit((c.value)(z.as_f64())),
        }
    }

    /// Derivative of the activation. ReLU uses the convention `sigma'(0) = 0`.
    pub fn derivative<T: Scalar>(&self, z: T) -> T {
        match self {
            Activation::Sigmoid => {
                let s = self.value(z);
                s * (T::one() - s)
            }
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Custom(c) => match c.derivative {
                Some(d) => T::lit(d(z.as_f64())),
                None => T::lit(f64::NAN),
            },
        }
    }

    fn has_derivative(&self) -> bool {
        match self {
            Activation::Custom(c) => c.derivative.is_some(),
            _ => true,
        }
    }
}

/// Constants of the neural tangent feature families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NtkParams<T> {
    pub activation: Activation,
    pub tau: T,
    pub gamma: T,
    /// Radius of the input ball on which the `kappa^2` bound is certified.
    pub input_radius: T,
}

impl<T: Scalar> Default for NtkParams<T> {
    fn default() -> Self {
        NtkParams { activation: Activation::Sigmoid, tau: T::one(), gamma: T::one(), input_radius: T::one() }
    }
}

/// Family of random features to draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureSpec<T> {
    GaussianRff { bandwidth: T },
    Ntk(NtkParams<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    GaussianRff,
    Ntk,
    ModelFourier,
}

impl FeatureKind {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureKind::GaussianRff => "gaussian-rff",
            FeatureKind::Ntk => "ntk",
            FeatureKind::ModelFourier => "model-fourier",
        }
    }
}

/// One sampled frequency of a model-Fourier map together with how many of the
/// `M` draws landed on it. Unmerged maps keep one atom per draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FourierAtom {
    pub frequency: usize,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Sampled<T> {
    GaussianRff {
        bandwidth: T,
        /// `M x d`, one frequency vector per row.
        frequencies: DMatrix<T>,
        offsets: DVector<T>,
    },
    Ntk {
        params: NtkParams<T>,
        /// `M x d`, one hidden unit per row.
        weights: DMatrix<T>,
    },
    ModelFourier {
        /// `l_1..l_J` of the model kernel.
        eigenvalues: Vec<T>,
        atoms: Vec<FourierAtom>,
        /// `sqrt(2 J l_j m_a / M)` per atom.
        amplitudes: Vec<T>,
    },
}

/// Sampled random feature map `x -> Phi_M(x)`.
///
/// Immutable once built; share freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    kind: FeatureKind,
    families: usize,
    features: usize,
    input_dim: usize,
    kappa_sq: T,
    seed: u64,
    sampled: Sampled<T>,
    id: u64,
}

/// Draws a feature map of the given family. Same arguments, same map.
pub fn sample_feature_map<T: Scalar>(
    spec: FeatureSpec<T>,
    input_dim: usize,
    features: usize,
    seed: u64,
) -> Result<FeatureMap<T>> {
    FeatureMap::sample(spec, input_dim, features, seed)
}

impl<T: Scalar> FeatureMap<T> {
    pub fn sample(spec: FeatureSpec<T>, input_dim: usize, features: usize, seed: u64) -> Result<Self> {
        if features == 0 {
            return invalid("feature count M must be at least 1");
        }
        if input_dim == 0 {
            return invalid("input dimension d must be at least 1");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
        match spec {
            FeatureSpec::GaussianRff { bandwidth } => {
                if !(bandwidth > T::zero()) || !bandwidth.is_finite_value() {
                    return invalid("bandwidth must be positive and finite");
                }
                let inv = T::one() / bandwidth;
                let mut frequencies = DMatrix::zeros(features, input_dim);
                for m in 0..features {
                    for k in 0..input_dim {
                        frequencies[(m, k)] = T::lit(normal(&mut rng)) * inv;
                    }
                }
                let offsets = DVector::from_fn(features, |_, _| T::lit(rng.random::<f64>() * 2.0 * PI));
                Ok(Self::assemble(
                    FeatureKind::GaussianRff,
                    1,
                    features,
                    input_dim,
                    T::lit(2.0),
                    seed,
                    Sampled::GaussianRff { bandwidth, frequencies, offsets },
                ))
            }
            FeatureSpec::Ntk(params) => {
                for (name, v) in [("tau", params.tau), ("gamma", params.gamma), ("input_radius", params.input_radius)] {
                    if !(v > T::zero()) || !v.is_finite_value() {
                        return invalid(format!("NTK constant {name} must be positive and finite"));
                    }
                }
                if !params.activation.has_derivative() {
                    return invalid(format!(
                        "activation '{}' has no derivative, which the tangent features require",
                        params.activation.name()
                    ));
                }
                let mut weights = DMatrix::zeros(features, input_dim);
                for m in 0..features {
                    for k in 0..input_dim {
                        weights[(m, k)] = T::lit(normal(&mut rng));
                    }
                }
                let kappa_sq = ntk_kappa_sq(&params, &weights);
                Ok(Self::assemble(
                    FeatureKind::Ntk,
                    input_dim + 2,
                    features,
                    input_dim,
                    kappa_sq,
                    seed,
                    Sampled::Ntk { params, weights },
                ))
            }
        }
    }

    /// Model-Fourier map: frequency indices drawn uniformly from `1..=J` where
    /// `J = eigenvalues.len()`, with families `sqrt(2 J l_j) cos(j x)` and
    /// `sqrt(2 J l_j) sin(j x)`. Inputs are scalar (`d = 1`).
    pub fn model_fourier(eigenvalues: &[T], features: usize, seed: u64) -> Result<Self> {
        if features == 0 {
            return invalid("feature count M must be at least 1");
        }
        if eigenvalues.is_empty() {
            return invalid("model needs at least one eigenvalue");
        }
        if eigenvalues.iter().any(|&l| !(l > T::zero()) || !l.is_finite_value()) {
            return invalid("model eigenvalues must be positive and finite");
        }
        let j_max = eigenvalues.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let atoms: Vec<FourierAtom> =
            (0..features).map(|_| FourierAtom { frequency: rng.random_range(1..=j_max), multiplicity: 1 }).collect();
        Ok(Self::fourier_from_atoms(eigenvalues.to_vec(), atoms, features, seed))
    }

    fn fourier_from_atoms(eigenvalues: Vec<T>, atoms: Vec<FourierAtom>, features: usize, seed: u64) -> Self {
        let j_max = T::from_count(eigenvalues.len());
        let m = T::from_count(features);
        let amplitudes = atoms
            .iter()
            .map(|a| (T::lit(2.0) * j_max * eigenvalues[a.frequency - 1] * T::from_count(a.multiplicity) / m).sqrt())
            .collect();
        let top = eigenvalues.iter().copied().fold(T::zero(), |a, b| a.max(b));
        let kappa_sq = T::lit(2.0) * j_max * top;
        Self::assemble(
            FeatureKind::ModelFourier,
            2,
            features,
            1,
            kappa_sq,
            seed,
            Sampled::ModelFourier { eigenvalues, atoms, amplitudes },
        )
    }

    fn assemble(
        kind: FeatureKind,
        families: usize,
        features: usize,
        input_dim: usize,
        kappa_sq: T,
        seed: u64,
        sampled: Sampled<T>,
    ) -> Self {
        let mut map = FeatureMap { kind, families, features, input_dim, kappa_sq, seed, sampled, id: 0 };
        map.id = map.compute_id();
        map
    }

    fn compute_id(&self) -> u64 {
        let mut h = StableHasher::new(0x6d61_705f_6964);
        h.write_u64(self.kind as u64);
        h.write_u64(self.families as u64);
        h.write_u64(self.features as u64);
        h.write_u64(self.input_dim as u64);
        h.write_u64(self.seed);
        match &self.sampled {
            Sampled::GaussianRff { bandwidth, frequencies, offsets } => {
                h.write_f64(bandwidth.as_f64());
                frequencies.iter().chain(offsets.iter()).for_each(|v| h.write_f64(v.as_f64()));
            }
            Sampled::Ntk { params, weights } => {
                h.write_str(params.activation.name());
                h.write_f64(params.tau.as_f64());
                h.write_f64(params.gamma.as_f64());
                h.write_f64(params.input_radius.as_f64());
                weights.iter().for_each(|v| h.write_f64(v.as_f64()));
            }
            Sampled::ModelFourier { eigenvalues, atoms, .. } => {
                eigenvalues.iter().for_each(|v| h.write_f64(v.as_f64()));
                for a in atoms {
                    h.write_u64(a.frequency as u64);
                    h.write_u64(a.multiplicity as u64);
                }
            }
        }
        h.finish()
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    /// Number of feature families `p`.
    pub fn families(&self) -> usize {
        self.families
    }

    /// Number of sampled parameters `M`.
    pub fn feature_count(&self) -> usize {
        self.features
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Columns per family. Equals `M` except for merged model-Fourier maps.
    pub fn columns_per_family(&self) -> usize {
        match &self.sampled {
            Sampled::ModelFourier { atoms, .. } => atoms.len(),
            _ => self.features,
        }
    }

    /// Width of a feature row, `p * M` for every unmerged map.
    pub fn output_dim(&self) -> usize {
        self.families * self.columns_per_family()
    }

    /// Upper bound on `sum_i phi_i(x, w)^2` over the admissible input domain.
    pub fn kappa_sq(&self) -> T {
        self.kappa_sq
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stable identity of the sampled map; estimators record it.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Sampled frequency vectors (Gaussian) or hidden weights (NTK), `M x d`.
    pub fn sampled_weights(&self) -> Option<&DMatrix<T>> {
        match &self.sampled {
            Sampled::GaussianRff { frequencies, .. } => Some(frequencies),
            Sampled::Ntk { weights, .. } => Some(weights),
            Sampled::ModelFourier { .. } => None,
        }
    }

    pub fn sampled_offsets(&self) -> Option<&DVector<T>> {
        match &self.sampled {
            Sampled::GaussianRff { offsets, .. } => Some(offsets),
            _ => None,
        }
    }

    pub fn fourier_atoms(&self) -> Option<&[FourierAtom]> {
        match &self.sampled {
            Sampled::ModelFourier { atoms, .. } => Some(atoms),
            _ => None,
        }
    }

    /// Gaussian map with explicitly given frequencies and offsets.
    pub fn gaussian_from_parts(bandwidth: T, frequencies: DMatrix<T>, offsets: DVector<T>, seed: u64) -> Result<Self> {
        if frequencies.nrows() == 0 || frequencies.ncols() == 0 {
            return invalid("need at least one frequency of dimension at least 1");
        }
        if offsets.len() != frequencies.nrows() {
            return Err(RfsError::DimensionMismatch { expected: frequencies.nrows(), found: offsets.len() });
        }
        if !(bandwidth > T::zero()) {
            return invalid("bandwidth must be positive");
        }
        let (m, d) = frequencies.shape();
        Ok(Self::assemble(
            FeatureKind::GaussianRff,
            1,
            m,
            d,
            T::lit(2.0),
            seed,
            Sampled::GaussianRff { bandwidth, frequencies, offsets },
        ))
    }

    /// Collapses repeated model-Fourier frequencies into single weighted atoms.
    ///
    /// The merged map has the same kernel `K_M`, hence the same spectral
    /// estimators and predictions, with at most `2 J` columns. Other kinds are
    /// returned unchanged.
    pub fn merge_duplicates(&self) -> Self {
        match &self.sampled {
            Sampled::ModelFourier { eigenvalues, atoms, .. } => {
                let mut counts = vec![0usize; eigenvalues.len() + 1];
                for a in atoms {
                    counts[a.frequency] += a.multiplicity;
                }
                let merged = counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(j, &c)| FourierAtom { frequency: j, multiplicity: c })
                    .collect();
                Self::fourier_from_atoms(eigenvalues.clone(), merged, self.features, self.seed)
            }
            _ => self.clone(),
        }
    }

    /// Coefficients of `x -> row(x) . theta` in the orthonormal basis
    /// `sqrt(2) cos(j x)`, `sqrt(2) sin(j x)`, `j = 1..J`. Returns `(cos, sin)`.
    /// Only model-Fourier maps lie in that span.
    pub fn fourier_coefficients(&self, theta: &DVector<T>) -> Result<(Vec<T>, Vec<T>)> {
        let Sampled::ModelFourier { eigenvalues, atoms, amplitudes } = &self.sampled else {
            return invalid("Fourier coefficients exist only for model-Fourier maps");
        };
        let width = atoms.len();
        if theta.len() != 2 * width {
            return Err(RfsError::DimensionMismatch { expected: 2 * width, found: theta.len() });
        }
        let mut cos = vec![T::zero(); eigenvalues.len()];
        let mut sin = vec![T::zero(); eigenvalues.len()];
        let inv_sqrt2 = T::one() / T::lit(2.0).sqrt();
        for (a, (atom, &amp)) in atoms.iter().zip(amplitudes).enumerate() {
            cos[atom.frequency - 1] += theta[a] * amp * inv_sqrt2;
            sin[atom.frequency - 1] += theta[width + a] * amp * inv_sqrt2;
        }
        Ok((cos, sin))
    }

    fn check_point(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(RfsError::DimensionMismatch { expected: self.input_dim, found: x.len() });
        }
        Ok(())
    }

    /// Writes the stacked feature row of `x` into `out` (length `output_dim`).
    fn fill_row(&self, x: &[T], out: &mut [T]) {
        let scale = T::one() / T::from_count(self.features).sqrt();
        match &self.sampled {
            Sampled::GaussianRff { frequencies, offsets, .. } => {
                let s = T::lit(2.0).sqrt() * scale;
                for (m, slot) in out.iter_mut().enumerate() {
                    let z = dot_row(frequencies, m, x) + offsets[m];
                    *slot = s * z.cos();
                }
            }
            Sampled::Ntk { params, weights } => {
                let m_count = self.features;
                let d = self.input_dim;
                for m in 0..m_count {
                    let z = dot_row(weights, m, x);
                    let act = params.activation.value(z);
                    let der = params.activation.derivative(z);
                    for (i, &xi) in x.iter().enumerate() {
                        out[i * m_count + m] = params.tau * xi * der * scale;
                    }
                    out[d * m_count + m] = act * scale;
                    out[(d + 1) * m_count + m] = params.tau * params.gamma * der * scale;
                }
            }
            Sampled::ModelFourier { atoms, amplitudes, .. } => {
                let width = atoms.len();
                // amplitudes already carry the 1/sqrt(M) factor
                for (a, (atom, &amp)) in atoms.iter().zip(amplitudes).enumerate() {
                    let arg = T::from_count(atom.frequency) * x[0];
                    out[a] = amp * arg.cos();
                    out[width + a] = amp * arg.sin();
                }
            }
        }
    }

    /// Stacked feature row `Phi_M(x)`.
    pub fn feature_row(&self, x: &[T]) -> Result<DVector<T>> {
        self.check_point(x)?;
        let mut row = DVector::zeros(self.output_dim());
        self.fill_row(x, row.as_mut_slice());
        Ok(row)
    }

    /// Feature matrix of the rows of `x` (`n x d`), tagged with this map's id.
    pub fn apply_features(&self, x: &DMatrix<T>) -> Result<FeatureMatrix<T>> {
        if x.ncols() != self.input_dim {
            return Err(RfsError::DimensionMismatch { expected: self.input_dim, found: x.ncols() });
        }
        let n = x.nrows();
        let width = self.output_dim();
        // Fill row-major then transpose once: nalgebra is column-major.
        let mut buf = vec![T::zero(); n * width];
        let mut point = vec![T::zero(); self.input_dim];
        for i in 0..n {
            for (k, p) in point.iter_mut().enumerate() {
                *p = x[(i, k)];
            }
            self.fill_row(&point, &mut buf[i * width..(i + 1) * width]);
        }
        let values = DMatrix::from_row_slice(n, width, &buf);
        Ok(FeatureMatrix { values, map_id: Some(self.id) })
    }

    /// `K_M(x, x') = <Phi_M(x), Phi_M(x')>`.
    pub fn rf_kernel(&self, x: &[T], x_prime: &[T]) -> Result<T> {
        let a = self.feature_row(x)?;
        let b = self.feature_row(x_prime)?;
        Ok(a.dot(&b))
    }
}

/// Free-function form of [`FeatureMap::apply_features`].
pub fn apply_features<T: Scalar>(map: &FeatureMap<T>, x: &DMatrix<T>) -> Result<FeatureMatrix<T>> {
    map.apply_features(x)
}

/// Free-function form of [`FeatureMap::rf_kernel`].
pub fn rf_kernel<T: Scalar>(map: &FeatureMap<T>, x: &[T], x_prime: &[T]) -> Result<T> {
    map.rf_kernel(x, x_prime)
}

fn dot_row<T: Scalar>(m: &DMatrix<T>, row: usize, x: &[T]) -> T {
    x.iter().enumerate().fold(T::zero(), |acc, (k, &xk)| acc + m[(row, k)] * xk)
}

fn ntk_kappa_sq<T: Scalar>(params: &NtkParams<T>, weights: &DMatrix<T>) -> T {
    let tau_sq = params.tau * params.tau;
    let radius_sq = params.input_radius * params.input_radius;
    let gamma_sq = params.gamma * params.gamma;
    let (value_sq, derivative_sq) = match params.activation {
        Activation::Sigmoid => (T::one(), T::lit(1.0 / 16.0)),
        Activation::Relu => {
            // relu(w.x)^2 <= |w|^2 |x|^2 on the ball
            let max_norm_sq =
                (0..weights.nrows()).map(|m| weights.row(m).norm_squared()).fold(T::zero(), |a, b| a.max(b));
            (max_norm_sq * radius_sq, T::one())
        }
        Activation::Custom(c) => {
            (T::lit(c.value_bound * c.value_bound), T::lit(c.derivative_bound * c.derivative_bound))
        }
    };
    tau_sq * radius_sq * derivative_sq + value_sq + tau_sq * gamma_sq * derivative_sq
}

/// Feature matrix `n x (p M)` produced by a feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T: Scalar> {
    values: DMatrix<T>,
    map_id: Option<u64>,
}

impl<T: Scalar> FeatureMatrix<T> {
    /// Wraps a hand-built matrix that is not tied to any sampled map.
    pub fn from_matrix(values: DMatrix<T>) -> Self {
        FeatureMatrix { values, map_id: None }
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<T> {
        self.values
    }

    pub fn map_id(&self) -> Option<u64> {
        self.map_id
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Random-feature Gram matrix `Phi Phi^T`.
    pub fn gram(&self) -> DMatrix<T> {
        &self.values * self.values.transpose()
    }
}

/// Closed-form limit kernel `K_infinity` paired with a feature family.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelOracle<T> {
    Gaussian { bandwidth: T },
    ReluNtk { tau: T, gamma: T },
    ModelFourier { eigenvalues: Vec<T> },
}

impl<T: Scalar> KernelOracle<T> {
    /// Oracle matching a sampled map. Sigmoid and custom NTK activations have no
    /// closed form and are rejected.
    pub fn for_map(map: &FeatureMap<T>) -> Result<Self> {
        match &map.sampled {
            Sampled::GaussianRff { bandwidth, .. } => Ok(KernelOracle::Gaussian { bandwidth: *bandwidth }),
            Sampled::Ntk { params, .. } => match params.activation {
                Activation::Relu => Ok(KernelOracle::ReluNtk { tau: params.tau, gamma: params.gamma }),
                other => invalid(format!("no closed-form limit kernel for activation '{}'", other.name())),
            },
            Sampled::ModelFourier { eigenvalues, .. } => {
                Ok(KernelOracle::ModelFourier { eigenvalues: eigenvalues.clone() })
            }
        }
    }

    pub fn limit_kernel(&self, x: &[T], x_prime: &[T]) -> Result<T> {
        if x.len() != x_prime.len() {
            return Err(RfsError::DimensionMismatch { expected: x.len(), found: x_prime.len() });
        }
        match self {
            KernelOracle::Gaussian { bandwidth } => {
                let dist_sq = x.iter().zip(x_prime).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
                Ok((-dist_sq / (T::lit(2.0) * *bandwidth * *bandwidth)).exp())
            }
            KernelOracle::ReluNtk { tau, gamma } => {
                let (value_moment, derivative_moment) = relu_moments(x, x_prime);
                let inner = x.iter().zip(x_prime).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                Ok(value_moment + *tau * *tau * (inner + *gamma * *gamma) * derivative_moment)
            }
            KernelOracle::ModelFourier { eigenvalues } => {
                if x.len() != 1 {
                    return Err(RfsError::DimensionMismatch { expected: 1, found: x.len() });
                }
                let delta = x[0] - x_prime[0];
                Ok(eigenvalues
                    .iter()
                    .enumerate()
                    .fold(T::zero(), |acc, (j, &l)| acc + T::lit(2.0) * l * (T::from_count(j + 1) * delta).cos()))
            }
        }
    }
}

/// Free-function form of [`KernelOracle::limit_kernel`].
pub fn limit_kernel<T: Scalar>(oracle: &KernelOracle<T>, x: &[T], x_prime: &[T]) -> Result<T> {
    oracle.limit_kernel(x, x_prime)
}

/// Arc-cosine moments under `w ~ N(0, I)`:
/// `E[relu(w.x) relu(w.x')]` and `E[1{w.x > 0} 1{w.x' > 0}]`.
pub fn relu_moments<T: Scalar>(x: &[T], x_prime: &[T]) -> (T, T) {
    let nx = x.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
    let ny = x_prime.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
    if nx == T::zero() || ny == T::zero() {
        return (T::zero(), T::zero());
    }
    // angle from unit-vector chords; acos loses half the digits near 0 and pi
    let (mut diff, mut sum) = (T::zero(), T::zero());
    for (&u, &v) in x.iter().zip(x_prime) {
        let (u, v) = (u / nx, v / ny);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    let theta = T::lit(2.0) * diff.sqrt().atan2(sum.sqrt());
    let cos = theta.cos();
    let pi = T::pi();
    let two_pi = T::lit(2.0) * pi;
    let value = nx * ny * (theta.sin() + (pi - theta) * cos) / two_pi;
    let derivative = (pi - theta) / two_pi;
    (value, derivative)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rff(d: usize, m: usize, seed: u64) -> FeatureMap<f64> {
        FeatureMap::sample(FeatureSpec::GaussianRff { bandwidth: 1.0 }, d, m, seed).unwrap()
    }

    #[test]
    fn rff_dimensions() {
        let map = rff(1, 3, 7);
        assert_eq!(map.families(), 1);
        assert_eq!(map.output_dim(), 3);
        assert_eq!(map.kappa_sq(), 2.0);
    }

    #[test]
    fn ntk_dimensions() {
        let map = FeatureMap::<f64>::sample(FeatureSpec::Ntk(NtkParams::default()), 2, 5, 1).unwrap();
        assert_eq!(map.families(), 4);
        assert_eq!(map.output_dim(), 20);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = rff(3, 16, 42);
        let b = rff(3, 16, 42);
        assert_eq!(a, b);
        assert_eq!(a.id(), b.id());
        assert_ne!(a.id(), rff(3, 16, 43).id());
        // f32 maps draw the same parameters (in f64, then rounded)
        let c = FeatureMap::<f32>::sample(FeatureSpec::GaussianRff { bandwidth: 1.0 }, 3, 16, 42).unwrap();
        let wa = a.sampled_weights().unwrap();
        let wc = c.sampled_weights().unwrap();
        for (x, y) in wa.iter().zip(wc.iter()) {
            assert_eq!(*x as f32, *y);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let spec = FeatureSpec::GaussianRff { bandwidth: 1.0 };
        assert!(FeatureMap::<f64>::sample(spec, 1, 0, 0).is_err());
        assert!(FeatureMap::<f64>::sample(spec, 0, 3, 0).is_err());
        assert!(FeatureMap::<f64>::sample(FeatureSpec::GaussianRff { bandwidth: 0.0 }, 1, 3, 0).is_err());
        assert!(FeatureMap::<f64>::sample(FeatureSpec::GaussianRff { bandwidth: -1.0 }, 1, 3, 0).is_err());
        let no_derivative = Activation::Custom(CustomActivation {
            name: "tanh-no-derivative",
            value: f64::tanh,
            derivative: None,
            value_bound: 1.0,
            derivative_bound: 1.0,
        });
        let ntk = NtkParams { activation: no_derivative, ..NtkParams::default() };
        assert!(FeatureMap::<f64>::sample(FeatureSpec::Ntk(ntk), 2, 3, 0).is_err());
    }

    #[test]
    fn constant_frequency_feature() {
        let map = FeatureMap::gaussian_from_parts(1.0, DMatrix::zeros(1, 2), DVector::zeros(1), 0).unwrap();
        for x in [[0.0, 0.0], [1.5, -3.0], [10.0, 2.0]] {
            let row = map.feature_row(&x).unwrap();
            assert_relative_eq!(row[0], 2f64.sqrt(), epsilon = 1e-15);
            assert_relative_eq!(map.rf_kernel(&x, &[0.3, 0.7]).unwrap(), 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn ntk_zero_input() {
        let params = NtkParams { activation: Activation::Relu, ..NtkParams::default() };
        let map = FeatureMap::<f64>::sample(FeatureSpec::Ntk(params), 3, 8, 5).unwrap();
        let row = map.feature_row(&[0.0, 0.0, 0.0]).unwrap();
        assert!(row.iter().take(3 * 8).all(|&v| v == 0.0));
        assert!(row.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kernel_matches_feature_rows() {
        let map = FeatureMap::<f64>::sample(FeatureSpec::Ntk(NtkParams::default()), 2, 6, 3).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[0.2, -0.4, 0.5, 0.1]);
        let phi = map.apply_features(&x).unwrap();
        let k = map.rf_kernel(&[0.2, -0.4], &[0.5, 0.1]).unwrap();
        assert_relative_eq!(phi.values().row(0).dot(&phi.values().row(1)), k, max_relative = 1e-12);
        assert_eq!(phi.map_id(), Some(map.id()));
        assert!(map.apply_features(&DMatrix::zeros(2, 3)).is_err());
        assert!(map.rf_kernel(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn oracle_values() {
        let g = KernelOracle::Gaussian { bandwidth: 0.7 };
        assert_relative_eq!(g.limit_kernel(&[0.3, 1.0], &[0.3, 1.0]).unwrap(), 1.0);
        let m = KernelOracle::ModelFourier { eigenvalues: vec![1.0] };
        assert_relative_eq!(m.limit_kernel(&[0.4], &[0.4]).unwrap(), 2.0);
        let (_, second) = relu_moments(&[0.3, -0.2], &[0.3, -0.2]);
        assert_relative_eq!(second, 0.5, epsilon = 1e-15);
        let sigmoid = FeatureMap::<f64>::sample(FeatureSpec::Ntk(NtkParams::default()), 2, 3, 0).unwrap();
        assert!(KernelOracle::for_map(&sigmoid).is_err());
    }

    #[test]
    fn relu_moments_orthogonal_and_opposite() {
        // orthogonal inputs: theta = pi/2
        let (v, d) = relu_moments(&[1.0, 0.0], &[0.0, 2.0]);
        assert_relative_eq!(v, 2.0 / (2.0 * PI), epsilon = 1e-15);
        assert_relative_eq!(d, 0.25, epsilon = 1e-15);
        // opposite inputs never both activate
        let (v, d): (f64, f64) = relu_moments(&[1.0, 1.0], &[-1.0, -1.0]);
        assert!(v.abs() < 1e-15 && d.abs() < 1e-15);
    }

    #[test]
    fn merged_fourier_map_has_same_kernel() {
        let eig: Vec<f64> = (1..=6).map(|j| 1.0 / (j * j) as f64).collect();
        let map = FeatureMap::model_fourier(&eig, 40, 9).unwrap();
        let merged = map.merge_duplicates();
        assert!(merged.output_dim() <= 12);
        assert_eq!(map.output_dim(), 80);
        for (a, b) in [(0.1, 2.0), (1.0, 1.0), (5.5, 0.3)] {
            assert_relative_eq!(
                map.rf_kernel(&[a], &[b]).unwrap(),
                merged.rf_kernel(&[a], &[b]).unwrap(),
                max_relative = 1e-12
            );
        }
    }
}
