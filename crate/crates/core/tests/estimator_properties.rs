use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rfs_core::estimators::{
    fit_kernel_oracle, fit_rf_iterative, fit_rf_krr, predict_features, IterationMode, IterativeFit,
};
use rfs_core::featuremaps::{FeatureMap, FeatureMatrix, FeatureSpec};
use rfs_core::filters::{FilterMethod, FilterSpec};

struct Problem {
    phi: FeatureMatrix<f64>,
    y: DVector<f64>,
    kappa_sq: f64,
}

fn problem(seed: u64, n: usize, m: usize, d: usize) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let map = FeatureMap::<f64>::sample(FeatureSpec::GaussianRff { bandwidth: 0.8 }, d, m, seed ^ 0xff).unwrap();
    Problem { phi: map.apply_features(&x).unwrap(), y, kappa_sq: map.kappa_sq() }
}

fn filter_for(method: FilterMethod, kappa_sq: f64, k: usize) -> FilterSpec<f64> {
    match method {
        FilterMethod::Tikhonov => FilterSpec::tikhonov(1.0 / k as f64).unwrap(),
        m => FilterSpec::iterative_on(m, 0.5 / kappa_sq, 0.4, k, kappa_sq).unwrap(),
    }
}

fn objective(p: &Problem, theta: &DVector<f64>, lambda: f64) -> f64 {
    let n = p.y.len() as f64;
    (p.phi.values() * theta - &p.y).norm_squared() / n + lambda * theta.norm_squared()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn feature_and_kernel_space_agree(
        seed in any::<u64>(),
        n in 2usize..=50,
        m in 1usize..=30,
        k in 1usize..60,
        which in 0usize..4,
    ) {
        let method = [FilterMethod::Tikhonov, FilterMethod::Landweber, FilterMethod::HeavyBall, FilterMethod::Nesterov][which];
        let p = problem(seed, n, m, 2);
        let filter = filter_for(method, p.kappa_sq, k);
        let state = match method {
            FilterMethod::Tikhonov => fit_rf_krr(&p.phi, &p.y, filter.lambda()).unwrap(),
            _ => fit_rf_iterative(&p.phi, &p.y, filter).unwrap(),
        };
        let gram = p.phi.gram();
        let dual = fit_kernel_oracle(&gram, &p.y, &filter).unwrap();
        let gap = (predict_features(&p.phi, &state).unwrap() - &gram * dual).amax();
        prop_assert!(gap <= 1e-6, "{method}: gap {gap}");
    }

    #[test]
    fn gradient_descent_training_error_never_increases(seed in any::<u64>(), n in 5usize..50, m in 1usize..30) {
        let p = problem(seed, n, m, 3);
        let cov = p.phi.values().transpose() * p.phi.values() / n as f64;
        let top = SymmetricEigen::new(cov).eigenvalues.max();
        let alpha = 1.0 / top.max(1e-12);
        let filter = FilterSpec::iterative_on(FilterMethod::Landweber, alpha, 0.0, 40, top.max(1e-12)).unwrap();
        let mut fit = IterativeFit::new(&p.phi, &p.y, filter, IterationMode::Direct).unwrap();
        let mut last = (p.phi.values() * fit.theta() - &p.y).norm_squared() / n as f64;
        for _ in 0..40 {
            fit.step().unwrap();
            let err = (p.phi.values() * fit.theta() - &p.y).norm_squared() / n as f64;
            prop_assert!(err <= last * (1.0 + 1e-12) + 1e-15);
            last = err;
        }
    }
}

#[test]
fn tikhonov_solution_minimizes_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..5 {
        let p = problem(seed, 30, 12, 2);
        let lambda = 0.05;
        let theta = fit_rf_krr(&p.phi, &p.y, lambda).unwrap().theta;
        let best = objective(&p, &theta, lambda);
        for _ in 0..20 {
            let mut dir = DVector::from_fn(theta.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            dir /= dir.norm();
            assert!(objective(&p, &(&theta + dir * 1e-3), lambda) >= best);
        }
    }
}

#[test]
fn heavy_ball_equals_its_spectral_polynomial() {
    // phi_k from the scalar recurrence phi_{j+1} = alpha + (1 + beta - alpha t) phi_j - beta phi_{j-1}
    let p = problem(21, 25, 18, 2);
    let n = 25.0;
    let (alpha, beta, k) = (0.5 / p.kappa_sq, 0.6, 35);
    let filter = FilterSpec::iterative_on(FilterMethod::HeavyBall, alpha, beta, k, p.kappa_sq).unwrap();
    let theta = fit_rf_iterative(&p.phi, &p.y, filter).unwrap().theta;
    let eig = SymmetricEigen::new(p.phi.gram() / n);
    let poly = |t: f64| {
        let (mut prev, mut cur) = (0.0, 0.0);
        for _ in 0..k {
            let next = alpha + (1.0 + beta - alpha * t) * cur - beta * prev;
            prev = cur;
            cur = next;
        }
        cur
    };
    let weights = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&t| poly(t.max(0.0))));
    let coeffs = &eig.eigenvectors * weights.component_mul(&(eig.eigenvectors.transpose() * &p.y));
    let expected = p.phi.values().transpose() * coeffs / n;
    assert!((theta - expected).amax() < 1e-8);
}
