use glearn::market::*;
use proptest::prelude::*;

fn universe(alpha: Vec<f64>, beta: Vec<f64>) -> AssetUniverse {
    let prices = vec![50.0; alpha.len()];
    AssetUniverse { alpha, beta, prices }
}

#[test]
fn idiosyncratic_variance_matches_recipe() {
    let spec = MarketSpec { n_risky: 1, n_paths: 10_000, horizon: 4, ..MarketSpec::default() };
    let paths = simulate_with_universe(&spec, &universe(vec![0.01], vec![0.0])).unwrap();
    let var = residual_covariance(&paths).unwrap().sigma_r[(0, 0)];
    let want = spec.sigma_i * spec.sigma_i * spec.dt;
    assert!((var - want).abs() <= 0.05 * want, "{var} vs {want}");
}

#[test]
fn shared_factor_covariance_matches_factor_model() {
    let spec = MarketSpec { n_risky: 2, n_paths: 10_000, horizon: 4, ..MarketSpec::default() };
    let (b1, b2) = (0.5, 0.7);
    let paths = simulate_with_universe(&spec, &universe(vec![0.0, 0.02], vec![b1, b2])).unwrap();
    let cov = residual_covariance(&paths).unwrap().sigma_r;
    let want = b1 * b2 * spec.sigma_m * spec.sigma_m * spec.dt;
    assert!((cov[(0, 1)] - want).abs() <= 0.1 * want, "{} vs {want}", cov[(0, 1)]);
    // Diagonal: systematic plus idiosyncratic variance.
    for (i, b) in [b1, b2].into_iter().enumerate() {
        let d = (b * b * spec.sigma_m * spec.sigma_m + spec.sigma_i * spec.sigma_i * (1.0 - b * b)) * spec.dt;
        assert!((cov[(i, i)] - d).abs() <= 0.1 * d);
    }
}

#[test]
fn residuals_have_zero_mean() {
    let spec = MarketSpec { n_risky: 10, n_paths: 2000, horizon: 10, ..MarketSpec::default() };
    let paths = simulate(&spec).unwrap();
    // Average over assets within each (path, period), which are independent draws.
    let samples: Vec<f64> = paths
        .realized
        .chunks_exact(spec.n_risky)
        .zip(paths.expected.chunks_exact(spec.n_risky))
        .map(|(r, e)| r.iter().zip(e).map(|(a, b)| a - b).sum::<f64>() / spec.n_risky as f64)
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 3.0 * (var / n).sqrt(), "mean {mean}");
}

#[test]
fn expected_and_realized_means_are_positively_correlated() {
    let spec = MarketSpec::default();
    let (exp, real) = simulate(&spec).unwrap().asset_means();
    let n = exp.len() as f64;
    let (me, mr) = (exp.iter().sum::<f64>() / n, real.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let (mut sxx, mut syy) = (0.0, 0.0);
    for (e, r) in exp.iter().zip(&real) {
        sxy += (e - me) * (r - mr);
        sxx += (e - me).powi(2);
        syy += (r - mr).powi(2);
    }
    let corr = sxy / (sxx * syy).sqrt();
    assert!(corr > 0.0, "correlation {corr}");
}

#[test]
fn alpha_draws_are_annual_rates_scaled_to_the_period() {
    let spec = MarketSpec { n_risky: 500, ..MarketSpec::default() };
    let uni = AssetUniverse::draw(&spec);
    let (lo, hi) = spec.alpha_range;
    assert!(uni.alpha.iter().all(|a| *a >= lo * spec.dt && *a <= hi * spec.dt));
    assert!(uni.beta.iter().all(|b| *b >= spec.beta_range.0 && *b <= spec.beta_range.1));
    assert!(uni.prices.iter().all(|p| *p >= spec.price_range.0 && *p <= spec.price_range.1));
}

#[test]
fn universe_mismatch_is_a_shape_error() {
    let spec = MarketSpec { n_risky: 3, n_paths: 2, horizon: 2, ..MarketSpec::default() };
    assert!(simulate_with_universe(&spec, &universe(vec![0.0; 2], vec![0.1; 2])).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn panels_are_finite_and_reproducible(
        n_risky in 1usize..6,
        n_paths in 1usize..8,
        horizon in 1usize..6,
        seed in any::<u64>(),
        c in 0.0f64..=1.0,
    ) {
        let spec = MarketSpec { n_risky, n_paths, horizon, seed, oracle_c: c, ..MarketSpec::default() };
        let a = simulate(&spec).unwrap();
        prop_assert_eq!(a.expected.len(), n_paths * horizon * n_risky);
        prop_assert_eq!(a.realized.len(), n_paths * horizon * n_risky);
        prop_assert_eq!(a.market.len(), n_paths * horizon);
        prop_assert!(a.realized.iter().chain(&a.expected).all(|v| v.is_finite()));
        prop_assert_eq!(a, simulate(&spec).unwrap());
    }
}
