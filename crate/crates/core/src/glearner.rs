//! Entropy-regularized LQR solved with G-learning under a Gaussian reference policy.
//!
//! The free energy `F_t(x)` and the action value `G_t(x, u)` stay quadratic at
//! every step. Going backward from the terminal step, each step
//!
//! 1. takes the expectation of `F_{t+1}` under the linear state equation
//!    `x' = A_t(x + u) + (x + u) ∘ ε̃` to get the `G_t` coefficients,
//! 2. multiplies the prior `π₀(u|x) = N(ū + v̄x, Σp)` by `exp(βG_t)` to obtain the
//!    posterior Gaussian policy, and
//! 3. integrates `u` out analytically to get the `F_t` coefficients.

use nalgebra::Cholesky;
use nalgebra::Dyn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_len, check_square, cholesky, log_det_chol, pad_bond, symmetrize, symmetrized, Mat, Vector};
use crate::market::{ReturnCovariance, ReturnPaths};
use crate::rewards::{build_path, BenchmarkPath, RewardCoeffs, RewardParams};

/// How the transaction-cost matrix enters the `G` coefficient `Q⁽ᵘᵘ⁾`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OmegaMode {
    /// `Q⁽ᵘᵘ⁾ = R⁽ᵘᵘ⁾ + γ(AᵀF̄A + Σ̃_r ∘ F̄)`. Satisfies the Bellman identity.
    #[default]
    Derived,
    /// Subtracts Ω a second time, on top of the −Ω already inside `R⁽ᵘᵘ⁾`.
    StrictPaper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Inverse temperature β.
    pub beta: f64,
    /// Discount factor γ.
    pub gamma: f64,
    pub max_inner_iters: usize,
    /// Relative-change tolerance on the posterior mean parameters `(ũ, ṽ)`.
    pub inner_tol: f64,
    pub omega_mode: OmegaMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            beta: 1000.0,
            gamma: 0.95,
            max_inner_iters: 100,
            inner_tol: 1e-9,
            omega_mode: OmegaMode::Derived,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta = {} must be > 0", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma = {} outside (0, 1]", self.gamma)));
        }
        if self.max_inner_iters == 0 || !(self.inner_tol > 0.0) {
            return Err(Error::InvalidParameter("inner iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// Reference policy `π₀(u|x) = N(ū_t + v̄_t x, Σp)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorPolicy {
    pub u_bar: Vec<Vector>,
    pub v_bar: Vec<Mat>,
    pub sigma_p: Mat,
}

impl PriorPolicy {
    /// Constant mean `ū`, no state feedback (`v̄ = 0`).
    pub fn constant(u_bar: Vector, sigma_p: Mat, horizon: usize) -> Result<Self> {
        let n = u_bar.len();
        check_square("PriorPolicy: sigma_p", &sigma_p, n)?;
        cholesky(&sigma_p, "prior covariance")?;
        Ok(Self {
            u_bar: vec![u_bar; horizon],
            v_bar: vec![Mat::zeros(n, n); horizon],
            sigma_p: symmetrized(sigma_p),
        })
    }

    /// Zero-mean isotropic prior with per-asset standard deviation `sigma` dollars.
    pub fn isotropic(n: usize, horizon: usize, sigma: f64) -> Result<Self> {
        Self::constant(Vector::zeros(n), Mat::identity(n, n) * (sigma * sigma), horizon)
    }

    pub fn horizon(&self) -> usize {
        self.u_bar.len()
    }
}

/// Posterior Gaussian policy `N(ũ + ṽx, Σ̃p)` at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStep {
    pub u_tilde: Vector,
    pub v_tilde: Mat,
    pub sigma_p_tilde: Mat,
    /// `Σ̃p⁻¹ = Σp⁻¹ − 2βQ⁽ᵘᵘ⁾`.
    pub precision: Mat,
    pub log_det_precision: f64,
}

impl PosteriorStep {
    /// Rebuilds a step from its mean parameters and covariance.
    pub fn from_covariance(u_tilde: Vector, v_tilde: Mat, sigma_p_tilde: Mat) -> Result<Self> {
        let n = u_tilde.len();
        check_square("posterior covariance", &sigma_p_tilde, n)?;
        check_square("posterior feedback", &v_tilde, n)?;
        let chol = cholesky(&sigma_p_tilde, "posterior covariance")?;
        let precision = symmetrized(chol.inverse());
        let log_det_precision = -log_det_chol(&chol);
        Ok(Self { u_tilde, v_tilde, sigma_p_tilde, precision, log_det_precision })
    }

    pub fn mean(&self, x: &Vector) -> Vector {
        &self.u_tilde + &self.v_tilde * x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub prior: PriorPolicy,
    pub posterior: Vec<PosteriorStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FCoeffs {
    pub f_xx: Mat,
    pub f_x: Vector,
    pub f_0: f64,
}

impl FCoeffs {
    pub fn value(&self, x: &Vector) -> f64 {
        x.dot(&(&self.f_xx * x)) + x.dot(&self.f_x) + self.f_0
    }
}

/// Coefficients of `G_t(x, u)` plus the Gaussian-integration workspace.
#[derive(Debug, Clone, PartialEq)]
pub struct QCoeffs {
    pub q_xx: Mat,
    pub q_ux: Mat,
    pub q_uu: Mat,
    pub q_x: Vector,
    pub q_u: Vector,
    pub q_0: f64,
    /// `U_t = βQ⁽ᵘˣ⁾ + Σp⁻¹v̄_t`.
    pub u_aux: Mat,
    /// `W_t = βQ⁽ᵘ⁾ + Σp⁻¹ū_t`.
    pub w_aux: Vector,
    /// `Σ̄p = Σp⁻¹ − 2βQ⁽ᵘᵘ⁾`.
    pub sigma_bar: Mat,
}

impl QCoeffs {
    pub fn value(&self, x: &Vector, u: &Vector) -> f64 {
        x.dot(&(&self.q_xx * x))
            + u.dot(&(&self.q_ux * x))
            + u.dot(&(&self.q_uu * u))
            + x.dot(&self.q_x)
            + u.dot(&self.q_u)
            + self.q_0
    }
}

/// Everything the backward pass needs besides the prior and solver settings.
#[derive(Debug, Clone)]
pub struct LqProblem {
    pub params: RewardParams,
    pub rewards: Vec<RewardCoeffs>,
    /// Expected per-period returns `r̄_t`, bond first.
    pub rbar: Vec<Vector>,
    /// `Σ̃_r`: return covariance padded with a zero bond row/column.
    pub sigma_r_padded: Mat,
}

impl LqProblem {
    pub fn new(
        params: RewardParams,
        rbar: Vec<Vector>,
        sigma_r: &ReturnCovariance,
        benchmark: &BenchmarkPath,
    ) -> Result<Self> {
        params.validate()?;
        let rewards = build_path(&params, &rbar, sigma_r, benchmark)?;
        Ok(Self { params, rewards, rbar, sigma_r_padded: pad_bond(&sigma_r.sigma_r) })
    }

    pub fn horizon(&self) -> usize {
        self.rewards.len()
    }

    pub fn n(&self) -> usize {
        self.sigma_r_padded.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct SolvedPlan {
    pub beta: f64,
    pub gamma: f64,
    pub q: Vec<QCoeffs>,
    /// Free-energy coefficients. The last step holds the hard maximum of the reward.
    pub f: Vec<FCoeffs>,
    /// Log-normalizer of `π₀ e^{βG}` divided by β at each step; equal to `f`
    /// except at the terminal step.
    pub log_partition: Vec<FCoeffs>,
    pub policy: GaussianPolicy,
    /// `Σp⁻¹` and `log|Σp|` of the reference policy.
    pub prior_precision: Mat,
    pub prior_log_det: f64,
    /// Diagonal of `A_t = diag(1 + r̄_t)`.
    pub growth: Vec<Vector>,
    /// `Σ̃_{T−1} = Σ̂_{T−1} + Ω/λ`.
    pub sigma_tilde_terminal: Mat,
    pub sigma_r_padded: Mat,
    pub rewards: Vec<RewardCoeffs>,
    /// Policy-iteration sweeps used at each step.
    pub inner_iterations: Vec<usize>,
}

impl SolvedPlan {
    pub fn horizon(&self) -> usize {
        self.f.len()
    }

    pub fn n(&self) -> usize {
        self.sigma_r_padded.nrows()
    }

    pub fn posterior(&self, t: usize) -> &PosteriorStep {
        &self.policy.posterior[t]
    }
}

/// `Σ̃_{T−1} = Σ̂ + Ω/λ`.
fn terminal_sigma_tilde(coeffs: &RewardCoeffs, params: &RewardParams) -> Mat {
    symmetrized(&coeffs.sigma_hat + &params.omega / params.lam)
}

/// Closed-form maximizer of the one-step reward in `u`:
/// `u* = Σ̃⁻¹ (R⁽ᵘ⁾ + R⁽ᵘˣ⁾x) / 2λ`.
pub fn terminal_action(coeffs: &RewardCoeffs, params: &RewardParams, x: &Vector) -> Result<Vector> {
    check_len("terminal_action: x", coeffs.n(), x.len())?;
    let chol = cholesky(&terminal_sigma_tilde(coeffs, params), "terminal sigma tilde")?;
    let rhs = (&coeffs.r_u + &coeffs.r_ux * x) / (2.0 * params.lam);
    Ok(chol.solve(&rhs))
}

/// Free-energy coefficients at the last step, obtained by substituting the
/// linear terminal action back into the reward.
pub fn terminal_f(coeffs: &RewardCoeffs, params: &RewardParams) -> Result<FCoeffs> {
    let lam = params.lam;
    let chol = cholesky(&terminal_sigma_tilde(coeffs, params), "terminal sigma tilde")?;
    let k = chol.solve(&coeffs.r_ux);
    let kv = chol.solve(&coeffs.r_u);
    let ruu_k = &coeffs.r_uu * &k;
    let ruu_kv = &coeffs.r_uu * &kv;

    let mut f_xx = &coeffs.r_xx
        + coeffs.r_ux.transpose() * &k / (2.0 * lam)
        + k.transpose() * &ruu_k / (4.0 * lam * lam);
    symmetrize(&mut f_xx);
    let f_x = &coeffs.r_x
        + coeffs.r_ux.transpose() * &kv / lam
        + k.transpose() * &ruu_kv / (2.0 * lam * lam);
    let f_0 = coeffs.r_0 + coeffs.r_u.dot(&kv) / (2.0 * lam) + kv.dot(&ruu_kv) / (4.0 * lam * lam);
    Ok(FCoeffs { f_xx, f_x, f_0 })
}

/// `G` coefficients that coincide with the reward (no continuation value).
fn q_from_reward(r: &RewardCoeffs) -> QCoeffs {
    let n = r.n();
    QCoeffs {
        q_xx: r.r_xx.clone(),
        q_ux: r.r_ux.clone(),
        q_uu: r.r_uu.clone(),
        q_x: r.r_x.clone(),
        q_u: r.r_u.clone(),
        q_0: r.r_0,
        u_aux: Mat::zeros(n, n),
        w_aux: Vector::zeros(n),
        sigma_bar: Mat::zeros(n, n),
    }
}

/// Quadratic coefficient of `E[F_{t+1}(x')]` in `z = x + u`:
/// `AᵀF⁽ˣˣ⁾A + Σ̃_r ∘ F⁽ˣˣ⁾`.
pub fn next_value_curvature(growth: &Vector, f_xx: &Mat, sigma_r_padded: &Mat) -> Mat {
    let n = growth.len();
    let mut m = Mat::from_fn(n, n, |i, j| growth[i] * f_xx[(i, j)] * growth[j]);
    m += sigma_r_padded.component_mul(f_xx);
    symmetrize(&mut m);
    m
}

fn continuation_q(
    reward: &RewardCoeffs,
    next: &FCoeffs,
    growth: &Vector,
    sigma_r_padded: &Mat,
    omega: &Mat,
    cfg: &SolverConfig,
) -> QCoeffs {
    let gamma = cfg.gamma;
    let m = next_value_curvature(growth, &next.f_xx, sigma_r_padded);
    let a_fx = growth.component_mul(&next.f_x);
    let mut q_uu = &reward.r_uu + gamma * &m;
    if cfg.omega_mode == OmegaMode::StrictPaper {
        q_uu -= omega;
    }
    symmetrize(&mut q_uu);
    let n = growth.len();
    QCoeffs {
        q_xx: symmetrized(&reward.r_xx + gamma * &m),
        q_ux: &reward.r_ux + 2.0 * gamma * &m,
        q_uu,
        q_x: &reward.r_x + gamma * &a_fx,
        q_u: &reward.r_u + gamma * &a_fx,
        q_0: reward.r_0 + gamma * next.f_0,
        u_aux: Mat::zeros(n, n),
        w_aux: Vector::zeros(n),
        sigma_bar: Mat::zeros(n, n),
    }
}

struct PriorFactors {
    sigma_p_inv: Mat,
    log_det_sigma_p: f64,
}

/// Policy improvement: Bayesian update of the prior by `exp(βG)`.
fn improve(
    q: &QCoeffs,
    u_bar: &Vector,
    v_bar: &Mat,
    prior: &PriorFactors,
    beta: f64,
    t: usize,
) -> Result<(PosteriorStep, Cholesky<f64, Dyn>, Mat, Vector)> {
    let mut precision = &prior.sigma_p_inv - 2.0 * beta * &q.q_uu;
    symmetrize(&mut precision);
    let chol = Cholesky::new(precision.clone()).ok_or_else(|| Error::Infeasible {
        t,
        detail: "posterior precision Σp⁻¹ − 2βQ⁽ᵘᵘ⁾ is not positive definite".into(),
    })?;
    let u_aux = beta * &q.q_ux + &prior.sigma_p_inv * v_bar;
    let w_aux = beta * &q.q_u + &prior.sigma_p_inv * u_bar;
    let u_tilde = chol.solve(&w_aux);
    let v_tilde = chol.solve(&u_aux);
    let sigma_p_tilde = symmetrized(chol.inverse());
    let log_det_precision = log_det_chol(&chol);
    Ok((
        PosteriorStep { u_tilde, v_tilde, sigma_p_tilde, precision, log_det_precision },
        chol,
        u_aux,
        w_aux,
    ))
}

/// Policy evaluation: `(1/β) log ∫ π₀ e^{βG} du` as a quadratic form in `x`.
fn evaluate(
    q: &QCoeffs,
    post: &PosteriorStep,
    u_aux: &Mat,
    w_aux: &Vector,
    u_bar: &Vector,
    v_bar: &Mat,
    prior: &PriorFactors,
    beta: f64,
) -> FCoeffs {
    let sp_v = &prior.sigma_p_inv * v_bar;
    let sp_u = &prior.sigma_p_inv * u_bar;
    let mut f_xx = &q.q_xx + (u_aux.transpose() * &post.v_tilde - v_bar.transpose() * &sp_v) / (2.0 * beta);
    symmetrize(&mut f_xx);
    let f_x = &q.q_x + (u_aux.transpose() * &post.u_tilde - v_bar.transpose() * &sp_u) / beta;
    let f_0 = q.q_0 + (w_aux.dot(&post.u_tilde) - u_bar.dot(&sp_u)) / (2.0 * beta)
        - (prior.log_det_sigma_p + post.log_det_precision) / (2.0 * beta);
    FCoeffs { f_xx, f_x, f_0 }
}

fn relative_change(a: &PosteriorStep, b: &PosteriorStep) -> f64 {
    let num = (&a.u_tilde - &b.u_tilde).norm_squared() + (&a.v_tilde - &b.v_tilde).norm_squared();
    let den = b.u_tilde.norm_squared() + b.v_tilde.norm_squared();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Solves one step: alternates policy improvement and evaluation until the
/// posterior mean parameters stop changing.
fn solve_step(
    q: &mut QCoeffs,
    u_bar: &Vector,
    v_bar: &Mat,
    prior: &PriorFactors,
    cfg: &SolverConfig,
    t: usize,
) -> Result<(PosteriorStep, FCoeffs, usize)> {
    // Σ̃pΣp⁻¹ has spectral radius < 1 exactly when Q⁽ᵘᵘ⁾ ≺ 0.
    if Cholesky::new(-&q.q_uu).is_none() {
        return Err(Error::Infeasible {
            t,
            detail: "Q⁽ᵘᵘ⁾ is not negative definite; policy iteration is not a contraction".into(),
        });
    }
    let mut current: Option<PosteriorStep> = None;
    let mut residual = f64::INFINITY;
    for it in 1..=cfg.max_inner_iters {
        let (post, _chol, u_aux, w_aux) = improve(q, u_bar, v_bar, prior, cfg.beta, t)?;
        if let Some(prev) = &current {
            residual = relative_change(&post, prev);
            if residual < cfg.inner_tol {
                let f = evaluate(q, &post, &u_aux, &w_aux, u_bar, v_bar, prior, cfg.beta);
                q.sigma_bar = post.precision.clone();
                q.u_aux = u_aux;
                q.w_aux = w_aux;
                return Ok((post, f, it));
            }
        }
        current = Some(post);
    }
    Err(Error::Convergence { t, iterations: cfg.max_inner_iters, residual })
}

/// Backward recursion over `t = T−1, …, 0`.
pub fn backward_pass(problem: &LqProblem, prior: &PriorPolicy, cfg: &SolverConfig) -> Result<SolvedPlan> {
    cfg.validate()?;
    let horizon = problem.horizon();
    let n = problem.n();
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    check_len("backward_pass: prior horizon", horizon, prior.horizon())?;
    check_len("backward_pass: rbar horizon", horizon, problem.rbar.len())?;
    check_square("backward_pass: prior covariance", &prior.sigma_p, n)?;

    let sp_chol = cholesky(&prior.sigma_p, "prior covariance")?;
    let factors = PriorFactors {
        sigma_p_inv: symmetrized(sp_chol.inverse()),
        log_det_sigma_p: log_det_chol(&sp_chol),
    };
    let growth: Vec<Vector> = problem.rbar.iter().map(|r| r.add_scalar(1.0)).collect();

    let mut q: Vec<Option<QCoeffs>> = vec![None; horizon];
    let mut f: Vec<Option<FCoeffs>> = vec![None; horizon];
    let mut log_partition: Vec<Option<FCoeffs>> = vec![None; horizon];
    let mut posterior: Vec<Option<PosteriorStep>> = vec![None; horizon];
    let mut inner = vec![0; horizon];

    let last = horizon - 1;
    let terminal = &problem.rewards[last];
    for r in &problem.rewards {
        if Cholesky::new(-&r.r_uu).is_none() {
            return Err(Error::InvalidParameter("reward is not strictly concave in u".into()));
        }
    }
    f[last] = Some(terminal_f(terminal, &problem.params)?);
    let mut q_last = q_from_reward(terminal);
    let (post, soft, iters) = solve_step(&mut q_last, &prior.u_bar[last], &prior.v_bar[last], &factors, cfg, last)?;
    q[last] = Some(q_last);
    posterior[last] = Some(post);
    log_partition[last] = Some(soft);
    inner[last] = iters;

    for t in (0..last).rev() {
        let next = f[t + 1].as_ref().expect("filled on previous iteration");
        let mut qt = continuation_q(
            &problem.rewards[t],
            next,
            &growth[t],
            &problem.sigma_r_padded,
            &problem.params.omega,
            cfg,
        );
        let (post, ft, iters) = solve_step(&mut qt, &prior.u_bar[t], &prior.v_bar[t], &factors, cfg, t)?;
        q[t] = Some(qt);
        posterior[t] = Some(post);
        log_partition[t] = Some(ft.clone());
        f[t] = Some(ft);
        inner[t] = iters;
    }

    Ok(SolvedPlan {
        beta: cfg.beta,
        gamma: cfg.gamma,
        q: q.into_iter().map(Option::unwrap).collect(),
        f: f.into_iter().map(Option::unwrap).collect(),
        log_partition: log_partition.into_iter().map(Option::unwrap).collect(),
        policy: GaussianPolicy {
            prior: prior.clone(),
            posterior: posterior.into_iter().map(Option::unwrap).collect(),
        },
        prior_precision: factors.sigma_p_inv,
        prior_log_det: factors.log_det_sigma_p,
        growth,
        sigma_tilde_terminal: terminal_sigma_tilde(terminal, &problem.params),
        sigma_r_padded: problem.sigma_r_padded.clone(),
        rewards: problem.rewards.clone(),
        inner_iterations: inner,
    })
}

/// `F_t(x) = xᵀF⁽ˣˣ⁾x + xᵀF⁽ˣ⁾ + F⁽⁰⁾`.
pub fn free_energy(plan: &SolvedPlan, t: usize, x: &Vector) -> f64 {
    plan.f[t].value(x)
}

pub fn g_value(plan: &SolvedPlan, t: usize, x: &Vector, u: &Vector) -> f64 {
    plan.q[t].value(x, u)
}

/// `E[F_{t+1}(x')]` for `x' = A_t(x + u) + (x + u) ∘ ε̃`.
pub fn expected_next_free_energy(plan: &SolvedPlan, t: usize, x: &Vector, u: &Vector) -> f64 {
    let next = &plan.f[t + 1];
    let z = x + u;
    let m = next_value_curvature(&plan.growth[t], &next.f_xx, &plan.sigma_r_padded);
    z.dot(&(&m * &z)) + z.component_mul(&plan.growth[t]).dot(&next.f_x) + next.f_0
}

/// Draws `u ~ N(ũ_t + ṽ_t x, Σ̃p)`.
pub fn sample_action<R: Rng + ?Sized>(plan: &SolvedPlan, t: usize, x: &Vector, rng: &mut R) -> Result<Vector> {
    let post = plan.posterior(t);
    let l = cholesky(&post.sigma_p_tilde, "posterior covariance")?.unpack();
    Ok(draw(&post.mean(x), &l, rng))
}

fn draw<R: Rng + ?Sized>(mean: &Vector, l: &Mat, rng: &mut R) -> Vector {
    let z = Vector::from_fn(mean.len(), |_, _| rng.sample(StandardNormal));
    mean + l * z
}

/// Positions, trades and cash installments of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `T + 1` position vectors.
    pub x: Vec<Vector>,
    /// `T` trade vectors.
    pub u: Vec<Vector>,
    /// `c_t = 1ᵀu_t`.
    pub cash: Vec<f64>,
}

impl Trajectory {
    pub fn new(x: Vec<Vector>, u: Vec<Vector>) -> Result<Self> {
        check_len("Trajectory: positions vs trades", u.len() + 1, x.len())?;
        let cash = u.iter().map(cash_of).collect();
        Ok(Self { x, u, cash })
    }

    pub fn horizon(&self) -> usize {
        self.u.len()
    }

    pub fn wealth(&self, t: usize) -> f64 {
        self.x[t].sum()
    }
}

/// Sum in index order so the cash identity is reproducible bit for bit.
pub fn cash_of(u: &Vector) -> f64 {
    u.iter().fold(0.0, |acc, v| acc + v)
}

/// Applies realized returns: `x_{t+1} = (1 + r_t) ∘ (x_t + u_t)`, bond at `rf_period`.
pub(crate) fn step_positions(x: &Vector, u: &Vector, rf_period: f64, risky: &[f64]) -> Vector {
    let mut next = x + u;
    next[0] *= 1.0 + rf_period;
    for (i, r) in risky.iter().enumerate() {
        next[i + 1] *= 1.0 + r;
    }
    next
}

/// Simulates the posterior policy along every return path. Path `p` samples
/// from ChaCha stream `p` of `seed`.
pub fn rollout(
    plan: &SolvedPlan,
    paths: &ReturnPaths,
    x0: &Vector,
    rf_period: f64,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    rollout_policy(&plan.policy.posterior, paths, x0, rf_period, seed)
}

/// [`rollout`] driven by the per-step posterior policy alone.
pub fn rollout_policy(
    posterior: &[PosteriorStep],
    paths: &ReturnPaths,
    x0: &Vector,
    rf_period: f64,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let n = x0.len();
    check_len("rollout: horizon", posterior.len(), paths.horizon)?;
    check_len("rollout: assets", n, paths.n_risky + 1)?;
    for step in posterior {
        check_len("rollout: policy dimension", n, step.u_tilde.len())?;
    }
    let factors: Vec<Mat> = posterior
        .iter()
        .map(|p| cholesky(&p.sigma_p_tilde, "posterior covariance").map(|c| c.unpack()))
        .collect::<Result<_>>()?;

    let out = (0..paths.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let mut xs = Vec::with_capacity(paths.horizon + 1);
            let mut us = Vec::with_capacity(paths.horizon);
            xs.push(x0.clone());
            for t in 0..paths.horizon {
                let x = &xs[t];
                let u = draw(&posterior[t].mean(x), &factors[t], &mut rng);
                let next = step_positions(x, &u, rf_period, paths.realized_row(p, t));
                us.push(u);
                xs.push(next);
            }
            Trajectory::new(xs, us)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(out)
}

/// `wealth` dollars spread equally over the bond and every risky asset.
pub fn equal_allocation(n: usize, wealth: f64) -> Vector {
    Vector::from_element(n, wealth / n as f64)
}
