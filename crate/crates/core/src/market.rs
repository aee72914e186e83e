//! Single-factor market simulator with a noisy CAPM-style alpha model.
//!
//! The market return follows a discretized GBM increment. Each risky asset's
//! expected return mixes its unconditional CAPM drift with a fraction `c` of
//! the realized market return, so the signal is informative but weak.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, symmetrize, Mat, Vector};

/// Stream id reserved for the per-experiment asset universe draw.
const UNIVERSE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketSpec {
    pub n_risky: usize,
    /// Annual risk-free rate.
    pub r_f: f64,
    pub mu_m: f64,
    pub sigma_m: f64,
    pub sigma_i: f64,
    /// Period length in years.
    pub dt: f64,
    pub oracle_c: f64,
    /// Interval for per-asset alpha draws, as annual rates.
    pub alpha_range: (f64, f64),
    pub beta_range: (f64, f64),
    pub price_range: (f64, f64),
    pub n_paths: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Use the exact log-normal market increment instead of the arithmetic one.
    pub exponential_market: bool,
}

impl Default for MarketSpec {
    fn default() -> Self {
        Self {
            n_risky: 99,
            r_f: 0.02,
            mu_m: 0.05,
            sigma_m: 0.25,
            sigma_i: 0.05,
            dt: 0.25,
            oracle_c: 0.2,
            alpha_range: (-0.05, 0.15),
            beta_range: (0.05, 0.85),
            price_range: (20.0, 120.0),
            n_paths: 1000,
            horizon: 30,
            seed: 42,
            exponential_market: false,
        }
    }
}

impl MarketSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_risky == 0 || self.n_paths == 0 || self.horizon == 0 {
            return bad("n_risky, n_paths and horizon must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.oracle_c) {
            return bad(format!("oracle_c = {} outside [0, 1]", self.oracle_c));
        }
        if !(self.sigma_m >= 0.0 && self.sigma_i >= 0.0) {
            return bad("volatilities must be non-negative".into());
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        for (name, (lo, hi)) in [
            ("alpha_range", self.alpha_range),
            ("beta_range", self.beta_range),
            ("price_range", self.price_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} = [{lo}, {hi}] is not a valid interval"));
            }
        }
        let (blo, bhi) = self.beta_range;
        if blo <= -1.0 || bhi >= 1.0 {
            return bad(format!("beta_range [{blo}, {bhi}] must lie strictly inside (-1, 1)"));
        }
        if ![self.r_f, self.mu_m].iter().all(|v| v.is_finite()) {
            return bad("r_f and mu_m must be finite".into());
        }
        Ok(())
    }

    /// Risk-free return over one period.
    pub fn rf_period(&self) -> f64 {
        self.r_f * self.dt
    }
}

/// Per-asset loadings drawn once per experiment and shared by every path.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetUniverse {
    /// Per-period alpha: the annual draw times `dt`.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Initial dollar prices. Recorded only; positions are dollar-valued.
    pub prices: Vec<f64>,
}

impl AssetUniverse {
    pub fn draw(spec: &MarketSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(UNIVERSE_STREAM);
        let mut uniform = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
        let alpha = (0..spec.n_risky).map(|_| uniform(spec.alpha_range) * spec.dt).collect();
        let beta = (0..spec.n_risky).map(|_| uniform(spec.beta_range)).collect();
        let prices = (0..spec.n_risky).map(|_| uniform(spec.price_range)).collect();
        Self { alpha, beta, prices }
    }
}

/// Expected and realized per-period returns, `[n_paths × horizon × n_risky]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPaths {
    pub n_paths: usize,
    pub horizon: usize,
    pub n_risky: usize,
    pub expected: Vec<f64>,
    pub realized: Vec<f64>,
    /// Market return per `[path × period]`.
    pub market: Vec<f64>,
}

impl ReturnPaths {
    pub fn zeros(n_paths: usize, horizon: usize, n_risky: usize) -> Self {
        let len = n_paths * horizon * n_risky;
        Self {
            n_paths,
            horizon,
            n_risky,
            expected: vec![0.0; len],
            realized: vec![0.0; len],
            market: vec![0.0; n_paths * horizon],
        }
    }

    #[inline]
    fn offset(&self, path: usize, period: usize) -> usize {
        (path * self.horizon + period) * self.n_risky
    }

    pub fn expected_row(&self, path: usize, period: usize) -> &[f64] {
        let o = self.offset(path, period);
        &self.expected[o..o + self.n_risky]
    }

    pub fn realized_row(&self, path: usize, period: usize) -> &[f64] {
        let o = self.offset(path, period);
        &self.realized[o..o + self.n_risky]
    }

    pub fn expected_row_mut(&mut self, path: usize, period: usize) -> &mut [f64] {
        let o = self.offset(path, period);
        &mut self.expected[o..o + self.n_risky]
    }

    pub fn realized_row_mut(&mut self, path: usize, period: usize) -> &mut [f64] {
        let o = self.offset(path, period);
        &mut self.realized[o..o + self.n_risky]
    }

    /// Path-averaged expected risky returns per period.
    pub fn mean_expected(&self) -> Vec<Vector> {
        (0..self.horizon)
            .map(|t| {
                let mut acc = Vector::zeros(self.n_risky);
                for p in 0..self.n_paths {
                    for (a, v) in acc.iter_mut().zip(self.expected_row(p, t)) {
                        *a += v;
                    }
                }
                acc / self.n_paths as f64
            })
            .collect()
    }

    /// Expected-return path consumed by the solver: the bond (index 0) earns
    /// `rf_period` and risky assets their path-averaged expected return.
    pub fn solver_rbar(&self, rf_period: f64) -> Vec<Vector> {
        self.mean_expected()
            .into_iter()
            .map(|risky| {
                let mut full = Vector::zeros(self.n_risky + 1);
                full[0] = rf_period;
                full.rows_mut(1, self.n_risky).copy_from(&risky);
                full
            })
            .collect()
    }

    /// Per-asset sample means over paths and periods of (expected, realized).
    pub fn asset_means(&self) -> (Vec<f64>, Vec<f64>) {
        let n = (self.n_paths * self.horizon) as f64;
        let mut exp = vec![0.0; self.n_risky];
        let mut real = vec![0.0; self.n_risky];
        for p in 0..self.n_paths {
            for t in 0..self.horizon {
                for i in 0..self.n_risky {
                    exp[i] += self.expected_row(p, t)[i];
                    real[i] += self.realized_row(p, t)[i];
                }
            }
        }
        exp.iter_mut().for_each(|v| *v /= n);
        real.iter_mut().for_each(|v| *v /= n);
        (exp, real)
    }
}

pub fn simulate(spec: &MarketSpec) -> Result<ReturnPaths> {
    spec.validate()?;
    let universe = AssetUniverse::draw(spec);
    simulate_with_universe(spec, &universe)
}

/// Simulates every path against a fixed asset universe. Path `p` draws from its
/// own ChaCha stream, so the result does not depend on thread scheduling.
pub fn simulate_with_universe(spec: &MarketSpec, universe: &AssetUniverse) -> Result<ReturnPaths> {
    spec.validate()?;
    let n = spec.n_risky;
    if universe.alpha.len() != n || universe.beta.len() != n {
        return Err(Error::Shape {
            context: "simulate: asset universe",
            expected: n.to_string(),
            actual: universe.alpha.len().min(universe.beta.len()).to_string(),
        });
    }
    if universe.beta.iter().any(|b| b.abs() >= 1.0) {
        return Err(Error::InvalidParameter("every |beta'| must be < 1".into()));
    }

    let drift = spec.mu_m * spec.dt;
    let sqrt_dt = spec.dt.sqrt();
    let idio: Vec<f64> = universe
        .beta
        .iter()
        .map(|b| spec.sigma_i * (1.0 - b * b).sqrt() * sqrt_dt)
        .collect();

    let per_path: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..spec.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(p as u64);
            let mut expected = Vec::with_capacity(spec.horizon * n);
            let mut realized = Vec::with_capacity(spec.horizon * n);
            let mut market = Vec::with_capacity(spec.horizon);
            for _ in 0..spec.horizon {
                let zm: f64 = rng.sample(StandardNormal);
                let r_m = if spec.exponential_market {
                    ((spec.mu_m - 0.5 * spec.sigma_m * spec.sigma_m) * spec.dt
                        + spec.sigma_m * sqrt_dt * zm)
                        .exp_m1()
                } else {
                    drift + spec.sigma_m * sqrt_dt * zm
                };
                market.push(r_m);
                let signal = (1.0 - spec.oracle_c) * drift + spec.oracle_c * r_m;
                for i in 0..n {
                    let z: f64 = rng.sample(StandardNormal);
                    let rbar = universe.alpha[i] + universe.beta[i] * signal;
                    expected.push(rbar);
                    realized.push(rbar + universe.beta[i] * (r_m - drift) + idio[i] * z);
                }
            }
            (expected, realized, market)
        })
        .collect();

    let mut out = ReturnPaths {
        n_paths: spec.n_paths,
        horizon: spec.horizon,
        n_risky: n,
        expected: Vec::with_capacity(spec.n_paths * spec.horizon * n),
        realized: Vec::with_capacity(spec.n_paths * spec.horizon * n),
        market: Vec::with_capacity(spec.n_paths * spec.horizon),
    };
    for (e, r, m) in per_path {
        out.expected.extend(e);
        out.realized.extend(r);
        out.market.extend(m);
    }
    Ok(out)
}

/// Per-period covariance of the risky return residuals (realized − expected).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnCovariance {
    pub sigma_r: Mat,
}

impl ReturnCovariance {
    pub fn new(sigma_r: Mat) -> Result<Self> {
        if sigma_r.nrows() != sigma_r.ncols() {
            return Err(Error::Shape {
                context: "ReturnCovariance",
                expected: "square".into(),
                actual: format!("{}x{}", sigma_r.nrows(), sigma_r.ncols()),
            });
        }
        let mut sigma_r = sigma_r;
        symmetrize(&mut sigma_r);
        cholesky(&sigma_r, "return covariance")?;
        Ok(Self { sigma_r })
    }

    pub fn dim(&self) -> usize {
        self.sigma_r.nrows()
    }
}

pub fn residual_covariance(paths: &ReturnPaths) -> Result<ReturnCovariance> {
    let n = paths.n_risky;
    let samples = paths.n_paths * paths.horizon;
    if samples < 10 * n || samples < 2 {
        return Err(Error::Estimation(format!(
            "{samples} residual samples is fewer than 10 x {n} assets"
        )));
    }
    let mut mean = Vector::zeros(n);
    for (e, r) in paths.expected.chunks_exact(n).zip(paths.realized.chunks_exact(n)) {
        for i in 0..n {
            mean[i] += r[i] - e[i];
        }
    }
    mean /= samples as f64;

    let mut cov = Mat::zeros(n, n);
    let mut d = Vector::zeros(n);
    for (e, r) in paths.expected.chunks_exact(n).zip(paths.realized.chunks_exact(n)) {
        for i in 0..n {
            d[i] = r[i] - e[i] - mean[i];
        }
        cov.syger(1.0, &d, &d, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    cov /= (samples - 1) as f64;
    symmetrize(&mut cov);

    if cholesky(&cov, "residual covariance").is_ok() {
        return Ok(ReturnCovariance { sigma_r: cov });
    }
    let mean_diag = cov.diagonal().mean();
    let mut ridge = if mean_diag > 0.0 { 1e-10 * mean_diag } else { 1e-14 };
    for _ in 0..8 {
        let mut jittered = cov.clone();
        for i in 0..n {
            jittered[(i, i)] += ridge;
        }
        if cholesky(&jittered, "residual covariance").is_ok() {
            return Ok(ReturnCovariance { sigma_r: jittered });
        }
        ridge *= 10.0;
    }
    Err(Error::Estimation("residual covariance is not positive definite after ridge jitter".into()))
}
