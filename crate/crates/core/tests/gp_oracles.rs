use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stageopt_core::domain::{make_uniform_grid, GridDomain, Metric};
use stageopt_core::gp::{sample_prior, GpModel};
use stageopt_core::kernel::{KernelSpec, KernelTable};
use stageopt_core::special::bessel_k;

/// `K_nu(x) = ∫_0^∞ exp(-x cosh s) cosh(nu s) ds` by composite Simpson.
fn bessel_k_quadrature(nu: f64, x: f64) -> f64 {
    let mut upper: f64 = 1.0;
    while x * upper.cosh() - nu * upper < 60.0 {
        upper += 0.5;
    }
    let n = 200_000;
    let h = upper / n as f64;
    let f = |s: f64| (-x * s.cosh()).exp() * (nu * s).cosh();
    let mut acc = f(0.0) + f(upper);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    acc * h / 3.0
}

fn gamma_quadrature(x: f64) -> f64 {
    // Γ(x) = 5 ∫_0^∞ u^{5x-1} exp(-u^5) du after t = u^5, Simpson on [0, 3]
    let n = 400_000;
    let upper = 3.0;
    let h = upper / n as f64;
    let f = |u: f64| 5.0 * u.powf(5.0 * x - 1.0) * (-u.powi(5)).exp();
    let mut acc = f(0.0) + f(upper);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn bessel_k_matches_quadrature() {
    for &(nu, x) in &[(1.2, 0.3), (1.2, 2.5), (0.3, 7.0), (1.2, 0.6123724356957945), (2.7, 0.05), (0.9, 30.0)] {
        let q = bessel_k_quadrature(nu, x);
        let k = bessel_k(nu, x);
        assert!((k - q).abs() <= 1e-9 * q.abs().max(1e-300), "nu={nu} x={x}: {k} vs {q}");
    }
}

#[test]
fn bessel_k_matches_reference_values() {
    for &(nu, x, want) in &[
        (1.2, 0.3, 4.2140384942661795),
        (1.2, 2.5, 0.07956962205613845),
        (0.3, 7.0, 0.00042736373082278943),
    ] {
        let got = bessel_k(nu, x);
        assert!((got - want).abs() <= 1e-10 * want, "nu={nu} x={x}: {got}");
    }
}

#[test]
fn matern_correlation_matches_quadrature_oracle() {
    let (nu, l, r): (f64, f64, f64) = (1.2, 0.2, 0.1);
    let z = (2.0 * nu).sqrt() * r / l;
    let oracle = 2f64.powf(1.0 - nu) / gamma_quadrature(nu) * z.powf(nu) * bessel_k_quadrature(nu, z);
    let spec = KernelSpec::matern(nu, l, 1.0).unwrap();
    let got = spec.correlation(r / l);
    assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
    assert!((got - 0.7578263937056786).abs() < 1e-10);
}

/// Posterior from `(K_AA + noise I)^-1` formed explicitly.
fn dense_posterior(k: &KernelTable, noise: f64, obs: &[(usize, f64)]) -> (Vec<f64>, Vec<f64>) {
    let m = obs.len();
    let n = k.len();
    let gram = DMatrix::from_fn(m, m, |i, j| k.get(obs[i].0, obs[j].0) + if i == j { noise } else { 0.0 });
    let inv = gram.try_inverse().expect("gram matrix is invertible");
    let y = DVector::from_iterator(m, obs.iter().map(|o| o.1));
    let w = &inv * &y;
    let mut means = vec![0.0; n];
    let mut vars = vec![0.0; n];
    for x in 0..n {
        let kx = DVector::from_iterator(m, obs.iter().map(|o| k.get(x, o.0)));
        means[x] = kx.dot(&w);
        vars[x] = k.get(x, x) - kx.dot(&(&inv * &kx));
    }
    (means, vars)
}

#[test]
fn factorized_posterior_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..12 {
        let side = rng.random_range(3..=12);
        let domain = make_uniform_grid(2, side).unwrap();
        let spec = if case % 2 == 0 {
            KernelSpec::matern(1.2, rng.random_range(0.1..0.5), rng.random_range(0.5..2.0)).unwrap()
        } else {
            KernelSpec::squared_exponential(rng.random_range(0.1..0.5), rng.random_range(0.5..2.0)).unwrap()
        };
        let k = Arc::new(KernelTable::from_spec(&spec, &domain).unwrap());
        let noise = rng.random_range(0.001..0.05);
        let mut gp = GpModel::new(k.clone(), noise).unwrap();
        let mut obs = Vec::new();
        for _ in 0..rng.random_range(1..=80) {
            let x = rng.random_range(0..domain.len());
            let y = rng.random_range(-2.0..2.0);
            gp.add_observation(x, y).unwrap();
            obs.push((x, y));
        }
        let (means, vars) = dense_posterior(&k, noise, &obs);
        for x in 0..domain.len() {
            assert!((gp.mean_at(x) - means[x]).abs() < 1e-8, "case {case} mean at {x}");
            assert!((gp.variance_at(x) - vars[x]).abs() < 1e-8, "case {case} variance at {x}");
        }
    }
}

#[test]
fn repeated_observations_match_dense_inverse() {
    let domain = GridDomain::new(1, vec![0.0, 0.3, 0.7], Metric::Euclidean).unwrap();
    let k = Arc::new(KernelTable::from_spec(&KernelSpec::matern(1.2, 0.2, 1.0).unwrap(), &domain).unwrap());
    let mut gp = GpModel::new(k.clone(), 0.0025).unwrap();
    let obs = [(1, 0.4), (1, 0.5), (1, 0.45), (0, -0.1)];
    for &(x, y) in &obs {
        gp.add_observation(x, y).unwrap();
    }
    let (means, vars) = dense_posterior(&k, 0.0025, &obs);
    for x in 0..3 {
        assert!((gp.mean_at(x) - means[x]).abs() < 1e-10);
        assert!((gp.variance_at(x) - vars[x]).abs() < 1e-10);
    }
}

#[test]
fn prior_samples_reproduce_the_kernel_covariance() {
    let domain = make_uniform_grid(1, 6).unwrap();
    let k = KernelTable::from_spec(&KernelSpec::matern(1.2, 0.3, 1.0).unwrap(), &domain).unwrap();
    let draws = 20_000;
    let n = domain.len();
    let mut sum = vec![0.0; n];
    let mut cross = vec![0.0; n * n];
    for s in 0..draws {
        let f = sample_prior(&k, s as u64).unwrap();
        for i in 0..n {
            sum[i] += f[i];
            for j in 0..n {
                cross[i * n + j] += f[i] * f[j];
            }
        }
    }
    let d = draws as f64;
    for i in 0..n {
        assert!((sum[i] / d).abs() < 0.05, "mean at {i}");
        for j in 0..n {
            let cov = cross[i * n + j] / d - sum[i] * sum[j] / (d * d);
            assert!((cov - k.get(i, j)).abs() < 0.05, "covariance ({i},{j}): {cov} vs {}", k.get(i, j));
        }
    }
}
