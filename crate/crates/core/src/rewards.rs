//! Quadratic one-step reward for a goal-based contribution plan.
//!
//! Trades `u` are dollar changes of positions `x`, the cash installment is
//! `1ᵀu`, and the agent is penalized for the squared gap between a target
//! portfolio and next-period wealth plus a convex transaction cost `uᵀΩu`:
//!
//! ```text
//! R(x, u) = −1ᵀu − λ E[(P̂ − (1 + r)ᵀ(x + u))²] − uᵀΩu
//!         = xᵀR⁽ˣˣ⁾x + uᵀR⁽ᵘˣ⁾x + uᵀR⁽ᵘᵘ⁾u + xᵀR⁽ˣ⁾ + uᵀR⁽ᵘ⁾ + R⁽⁰⁾
//! ```
//!
//! Asset 0 is the risk-free bond; risky returns carry covariance `Σ_r`.

use crate::error::{Error, Result};
use crate::linalg::{check_len, check_square, is_symmetric, pad_bond, symmetrize, Mat, Vector};
use crate::market::ReturnCovariance;

#[derive(Debug, Clone, PartialEq)]
pub struct RewardParams {
    /// Weight of the squared target shortfall.
    pub lam: f64,
    /// Desired per-period growth of the current portfolio.
    pub eta: f64,
    /// Weight of the portfolio-dependent part of the target.
    pub rho: f64,
    /// Transaction-cost matrix Ω.
    pub omega: Mat,
}

impl RewardParams {
    pub fn with_scalar_omega(n: usize, lam: f64, eta: f64, rho: f64, omega: f64) -> Result<Self> {
        let p = Self { lam, eta, rho, omega: Mat::identity(n, n) * omega };
        p.validate()?;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.omega.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lam > 0.0 && self.lam.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda = {} must be > 0", self.lam)));
        }
        if !self.eta.is_finite() {
            return Err(Error::InvalidParameter(format!("eta = {} must be finite", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!("rho = {} outside [0, 1]", self.rho)));
        }
        if self.omega.nrows() != self.omega.ncols() || !is_symmetric(&self.omega, 1e-12) {
            return Err(Error::InvalidParameter("omega must be a symmetric square matrix".into()));
        }
        if self.omega.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("omega has non-finite entries".into()));
        }
        let min_eig = crate::linalg::sym_eigenvalues(&self.omega)[0];
        if min_eig < -1e-12 * self.omega.amax().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "omega is not positive semidefinite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(())
    }
}

/// Benchmark wealth `B_t`, t = 0..T−1, in dollars.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkPath {
    pub b: Vec<f64>,
}

impl BenchmarkPath {
    pub fn new(b: Vec<f64>) -> Result<Self> {
        if b.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("benchmark values must be positive".into()));
        }
        Ok(Self { b })
    }

    /// `B_t = v0 · exp(rate · t · dt)` with an annual continuously compounded rate.
    pub fn exponential(v0: f64, annual_rate: f64, dt: f64, horizon: usize) -> Result<Self> {
        Self::new((0..horizon).map(|t| v0 * (annual_rate * t as f64 * dt).exp()).collect())
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }
}

/// Coefficients of the expected one-step reward at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardCoeffs {
    pub r_xx: Mat,
    /// Cross term, entering as `uᵀ R⁽ᵘˣ⁾ x`.
    pub r_ux: Mat,
    pub r_uu: Mat,
    pub r_x: Vector,
    pub r_u: Vector,
    pub r_0: f64,
    /// Second moment of gross returns, `pad(Σ_r) + (1 + r̄)(1 + r̄)ᵀ`.
    pub sigma_hat: Mat,
}

impl RewardCoeffs {
    pub fn n(&self) -> usize {
        self.r_u.len()
    }
}

/// `P̂_{t+1} = (1 − ρ) B_t + ρ η 1ᵀx_t`.
pub fn target_portfolio(params: &RewardParams, b_t: f64, x: &Vector) -> f64 {
    (1.0 - params.rho) * b_t + params.rho * params.eta * x.sum()
}

pub fn build_coeffs(
    params: &RewardParams,
    rbar_t: &Vector,
    sigma_r: &ReturnCovariance,
    b_t: f64,
) -> Result<RewardCoeffs> {
    let n = rbar_t.len();
    check_len("build_coeffs: sigma_r + bond", n, sigma_r.dim() + 1)?;
    check_square("build_coeffs: omega", &params.omega, n)?;

    let lam = params.lam;
    let (eta, rho) = (params.eta, params.rho);
    let gross = rbar_t.add_scalar(1.0);
    let ones = Vector::from_element(n, 1.0);

    let mut sigma_hat = pad_bond(&sigma_r.sigma_r);
    sigma_hat.ger(1.0, &gross, &gross, 1.0);
    symmetrize(&mut sigma_hat);

    let growth_outer = &gross * ones.transpose();

    let mut r_xx = -lam * eta * eta * rho * rho * (&ones * ones.transpose())
        + 2.0 * lam * eta * rho * &growth_outer
        - lam * &sigma_hat;
    symmetrize(&mut r_xx);

    let r_ux = 2.0 * lam * eta * rho * &growth_outer - 2.0 * lam * &sigma_hat;

    let mut r_uu = -lam * &sigma_hat - &params.omega;
    symmetrize(&mut r_uu);

    let bench = (1.0 - rho) * b_t;
    let r_x = -2.0 * lam * eta * rho * bench * &ones + 2.0 * lam * bench * &gross;
    let r_u = -&ones + 2.0 * lam * bench * &gross;
    let r_0 = -lam * bench * bench;

    Ok(RewardCoeffs { r_xx, r_ux, r_uu, r_x, r_u, r_0, sigma_hat })
}

/// Coefficients for every period of a horizon.
pub fn build_path(
    params: &RewardParams,
    rbar: &[Vector],
    sigma_r: &ReturnCovariance,
    benchmark: &BenchmarkPath,
) -> Result<Vec<RewardCoeffs>> {
    check_len("build_path: benchmark length", rbar.len(), benchmark.len())?;
    rbar.iter()
        .zip(&benchmark.b)
        .map(|(r, b)| build_coeffs(params, r, sigma_r, *b))
        .collect()
}

/// Evaluates the quadratic reward form at `(x, u)`.
pub fn reward_value(coeffs: &RewardCoeffs, x: &Vector, u: &Vector) -> Result<f64> {
    let n = coeffs.n();
    check_len("reward_value: x", n, x.len())?;
    check_len("reward_value: u", n, u.len())?;
    Ok(quad_form(coeffs, x, u))
}

pub(crate) fn quad_form(c: &RewardCoeffs, x: &Vector, u: &Vector) -> f64 {
    x.dot(&(&c.r_xx * x))
        + u.dot(&(&c.r_ux * x))
        + u.dot(&(&c.r_uu * u))
        + x.dot(&c.r_x)
        + u.dot(&c.r_u)
        + c.r_0
}
