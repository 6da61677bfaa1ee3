//! Learning with random features under spectral filters.
//!
//! The crate samples random feature maps and fits them with spectral
//! regularization, either by a closed-form filter or by early-stopped
//! gradient iterations with optional momentum. Around that sit spectral
//! diagnostics, a synthetic Fourier model with closed-form error, CSV loading
//! and an experiment harness.
//!
//! Numerical code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision. The harness runs in `f64`.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod featuremaps;
pub mod filters;
pub mod harness;
pub mod ingest;
pub mod scalar;
pub mod seed;
pub mod spectrum;
pub mod synth;

pub use error::{Result, RfsError};
pub use estimators::{
    fit_kernel_oracle, fit_rf_iterative, fit_rf_krr, fit_rf_spectral, predict, EstimatorState, FeatureSpectralSolver,
    IterationMode, IterativeFit,
};
pub use featuremaps::{
    apply_features, rf_kernel, sample_feature_map, FeatureMap, FeatureMatrix, FeatureSpec, KernelOracle,
};
pub use filters::{filter_value, residual_value, verify_filter, FilterMethod, FilterSpec};
pub use ingest::{load_csv, standardize, Dataset};
pub use scalar::Scalar;
pub use spectrum::{effective_dimension, theory_schedule, Schedule, TheoryParams};
pub use synth::{build_model, sample_synthetic, SyntheticModel};

pub type FeatureMapF64 = FeatureMap<f64>;
pub type FeatureMapF32 = FeatureMap<f32>;
pub type FeatureMatrixF64 = FeatureMatrix<f64>;
pub type FeatureMatrixF32 = FeatureMatrix<f32>;
pub type FilterSpecF64 = FilterSpec<f64>;
pub type FilterSpecF32 = FilterSpec<f32>;
pub type EstimatorStateF64 = EstimatorState<f64>;
pub type EstimatorStateF32 = EstimatorState<f32>;
pub type DatasetF64 = Dataset<f64>;
pub type DatasetF32 = Dataset<f32>;
pub type SyntheticModelF64 = SyntheticModel<f64>;
pub type SyntheticModelF32 = SyntheticModel<f32>;
