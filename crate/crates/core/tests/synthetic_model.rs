use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rfs_core::spectrum::fit_spectral_decay;
use rfs_core::synth::{build_model, sample_synthetic};

/// Mean of `(g - f)^2` over an equispaced grid; exact for trigonometric
/// polynomials of degree below the grid size.
fn quadrature_error(model: &rfs_core::SyntheticModelF64, f: impl Fn(f64) -> f64, points: usize) -> f64 {
    let sum: f64 = (0..points)
        .map(|i| {
            let x = TAU * i as f64 / points as f64;
            let e = model.true_target(x) - f(x);
            e * e
        })
        .sum();
    (sum / points as f64).sqrt()
}

#[test]
fn analytic_error_matches_quadrature_and_monte_carlo() {
    let model = build_model::<f64>(30, 0.5, 0.75, 1.0, 0.2, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for s in 0..20 {
        let map = model.model_features(25, 100 + s).unwrap();
        let theta = DVector::from_fn(map.output_dim(), |_, _| 0.05 * rng.sample::<f64, _>(StandardNormal));
        let estimate = |x: f64| map.feature_row(&[x]).unwrap().dot(&theta);
        let analytic = model.l2_error_of(&map, &theta).unwrap();
        let exact = quadrature_error(&model, estimate, 4 * 30 + 1);
        assert!((analytic - exact).abs() <= 1e-10 * exact.max(1.0), "{analytic} vs {exact}");

        let draws = 200_000;
        let mc: f64 = (0..draws)
            .map(|_| {
                let x = rng.random::<f64>() * TAU;
                let e = model.true_target(x) - estimate(x);
                e * e
            })
            .sum::<f64>()
            / draws as f64;
        assert!((analytic - mc.sqrt()).abs() <= 0.01 * analytic, "{analytic} vs monte-carlo {}", mc.sqrt());
    }
}

#[test]
fn scaling_source_scales_target_norm() {
    let model = build_model::<f64>(50, 0.5, 1.0, 2.0, 0.0, 1).unwrap();
    let scaled = model.scaled(3.0).unwrap();
    assert!((scaled.target_norm() - 3.0 * model.target_norm()).abs() <= 1e-14 * scaled.target_norm());
    assert!((model.source_norm() - 2.0).abs() < 1e-12);
}

#[test]
fn capacity_condition_holds_on_the_grid() {
    let model = build_model::<f64>(200, 0.5, 0.5, 1.0, 0.1, 2).unwrap();
    let c_b = model.capacity_constant(1e-3, 1.0).unwrap();
    for i in 0..=300 {
        let lambda = 10f64.powf(-3.0 + 3.0 * i as f64 / 300.0);
        let n_lambda: f64 = model.eigenvalues().iter().map(|&l| 2.0 * l / (l + lambda)).sum();
        assert!(n_lambda <= c_b * lambda.powf(-0.5) * (1.0 + 1e-12));
    }
}

#[test]
fn empirical_gram_spectrum_decays_at_model_rate() {
    let model = build_model::<f64>(200, 0.5, 0.5, 1.0, 0.1, 3).unwrap();
    let data = sample_synthetic(&model, 1000, 9).unwrap();
    let xs: Vec<f64> = data.x.column(0).iter().copied().collect();
    let oracle = model.oracle();
    let n = xs.len();
    let gram = DMatrix::from_fn(n, n, |i, j| oracle.limit_kernel(&[xs[i]], &[xs[j]]).unwrap() / n as f64);
    let mut eigs: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| b.total_cmp(a));
    let fit = fit_spectral_decay(&eigs, None).unwrap();
    assert!((0.4..=0.6).contains(&fit.b_hat), "b_hat = {}", fit.b_hat);
}
