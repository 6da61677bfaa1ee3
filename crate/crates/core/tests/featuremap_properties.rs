use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rfs_core::featuremaps::{Activation, FeatureMap, FeatureSpec, KernelOracle, NtkParams};

fn relu_spec(radius: f64) -> FeatureSpec<f64> {
    FeatureSpec::Ntk(NtkParams { activation: Activation::Relu, tau: 1.0, gamma: 1.0, input_radius: radius })
}

fn random_points(seed: u64, n: usize, d: usize, scale: f64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gram_is_symmetric_psd(seed in any::<u64>(), n in 2usize..=64, m in 1usize..40, d in 1usize..5, ntk in any::<bool>()) {
        let spec = if ntk { relu_spec(10.0) } else { FeatureSpec::GaussianRff { bandwidth: 0.7 } };
        let map = FeatureMap::<f64>::sample(spec, d, m, seed).unwrap();
        let x = random_points(seed ^ 1, n, d, 1.0);
        let gram = DMatrix::from_fn(n, n, |i, j| map.rf_kernel(&row(&x, i), &row(&x, j)).unwrap());
        prop_assert!((&gram - gram.transpose()).amax() == 0.0);
        let trace = gram.trace();
        let min = SymmetricEigen::new(gram).eigenvalues.min();
        prop_assert!(min >= -1e-8 * trace, "min eigenvalue {min} against trace {trace}");
    }

    #[test]
    fn kernel_is_inner_product_of_rows(seed in any::<u64>(), m in 1usize..30, d in 1usize..4) {
        let map = FeatureMap::<f64>::sample(relu_spec(10.0), d, m, seed).unwrap();
        let x = random_points(seed ^ 2, 2, d, 1.0);
        let phi = map.apply_features(&x).unwrap();
        let inner = phi.values().row(0).dot(&phi.values().row(1));
        let k = map.rf_kernel(&row(&x, 0), &row(&x, 1)).unwrap();
        prop_assert!((k - inner).abs() <= 1e-12 * inner.abs().max(1e-300) + 1e-300);
    }
}

#[test]
fn feature_rows_respect_kappa_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rff = FeatureMap::<f64>::sample(FeatureSpec::GaussianRff { bandwidth: 1.0 }, 3, 50, 9).unwrap();
    assert_eq!(rff.kappa_sq(), 2.0);
    let eigs: Vec<f64> = (1..=40).map(|j| (j as f64).powf(-2.0)).collect();
    let fourier = FeatureMap::<f64>::model_fourier(&eigs, 60, 9).unwrap();
    // 2 J max_j l_j with l_1 = 1
    assert_eq!(fourier.kappa_sq(), 80.0);
    let radius = 2.0;
    let ntk = FeatureMap::<f64>::sample(relu_spec(radius), 3, 50, 9).unwrap();
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let inside: Vec<f64> = x.iter().map(|v| v * radius * rng.random::<f64>() / norm).collect();
        assert!(rff.feature_row(&x).unwrap().norm_squared() <= 2.0 + 1e-12);
        assert!(ntk.feature_row(&inside).unwrap().norm_squared() <= ntk.kappa_sq() * (1.0 + 1e-12));
        let t = [rng.random::<f64>() * std::f64::consts::TAU];
        assert!(fourier.feature_row(&t).unwrap().norm_squared() <= 80.0 * (1.0 + 1e-12));
    }
}

/// Averages `K_M` over 200 independent maps and compares with the limit kernel.
fn unbiasedness(spec: FeatureSpec<f64>, oracle: KernelOracle<f64>, d: usize) {
    let a = random_points(10, 20, d, 0.7);
    let b = random_points(11, 20, d, 0.7);
    let maps: Vec<FeatureMap<f64>> = (0..200).map(|s| FeatureMap::sample(spec, d, 16, 500 + s).unwrap()).collect();
    for i in 0..20 {
        let (xa, xb) = (row(&a, i), row(&b, i));
        let draws: Vec<f64> = maps.iter().map(|m| m.rf_kernel(&xa, &xb).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / 200.0;
        let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 199.0;
        let se = (var / 200.0).sqrt();
        let exact = oracle.limit_kernel(&xa, &xb).unwrap();
        assert!((mean - exact).abs() <= 3.0 * se, "pair {i}: mean {mean} exact {exact} se {se}");
    }
}

#[test]
fn gaussian_features_are_unbiased() {
    unbiasedness(FeatureSpec::GaussianRff { bandwidth: 1.0 }, KernelOracle::Gaussian { bandwidth: 1.0 }, 2);
}

#[test]
fn relu_tangent_features_are_unbiased() {
    unbiasedness(relu_spec(10.0), KernelOracle::ReluNtk { tau: 1.0, gamma: 1.0 }, 3);
}

#[test]
fn model_fourier_kernel_is_unbiased() {
    // merging duplicate frequencies must leave every map's kernel unchanged
    let eigs: Vec<f64> = (1..=10).map(|j| 1.0 / j as f64).collect();
    let oracle = KernelOracle::ModelFourier { eigenvalues: eigs.clone() };
    let (x, y) = ([0.3], [2.1]);
    let draws: Vec<f64> = (0..400)
        .map(|s| {
            let map = FeatureMap::<f64>::model_fourier(&eigs, 8, s).unwrap();
            let k = map.rf_kernel(&x, &y).unwrap();
            assert!((map.merge_duplicates().rf_kernel(&x, &y).unwrap() - k).abs() < 1e-12);
            k
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / 400.0;
    let se = (draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 399.0 / 400.0).sqrt();
    // closed form written out here rather than taken from the oracle
    let direct: f64 = eigs.iter().enumerate().map(|(j, l)| 2.0 * l * ((j + 1) as f64 * (0.3 - 2.1)).cos()).sum();
    assert!((oracle.limit_kernel(&x, &y).unwrap() - direct).abs() < 1e-12);
    assert!((mean - direct).abs() <= 3.0 * se, "mean {mean} exact {direct} se {se}");
}
