//! Maximum-likelihood inverse reinforcement learning for the G-learning agent.
//!
//! An observed trajectory contributes `log π_θ(u_t|x_t) + log p(x_{t+1}|x_t, u_t)`
//! per step, where `π_θ` is the posterior Gaussian policy of a plan solved
//! under candidate reward parameters θ = (λ, η, ρ, ω). The optimizer works in
//! unconstrained coordinates `(log λ, log η, logit ρ, log ω)`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::error::{Error, Result};
use crate::glearner::{backward_pass, g_value, LqProblem, PriorPolicy, SolvedPlan, SolverConfig, Trajectory};
use crate::linalg::{check_len, cholesky, log_det_chol, Mat, Vector};
use crate::market::ReturnCovariance;
use crate::rewards::{BenchmarkPath, RewardParams};

/// Risky positions smaller than this (in dollars) are left out of the
/// transition density, which divides by `x + u`.
pub const EPS_POS: f64 = 1e-8;

pub const PARAM_NAMES: [&str; 4] = ["lambda", "eta", "rho", "omega"];

/// Learnable reward parameters, with `Ω = ω I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub lam: f64,
    pub eta: f64,
    pub rho: f64,
    pub omega: f64,
}

impl Theta {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lam > 0.0 && self.eta > 0.0 && self.omega > 0.0 && self.rho > 0.0 && self.rho < 1.0;
        if !ok || !self.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(format!("theta {self:?} outside the feasible region")));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.lam, self.eta, self.rho, self.omega]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self { lam: a[0], eta: a[1], rho: a[2], omega: a[3] }
    }

    pub fn to_unconstrained(&self) -> [f64; 4] {
        [self.lam.ln(), self.eta.ln(), (self.rho / (1.0 - self.rho)).ln(), self.omega.ln()]
    }

    pub fn from_unconstrained(z: &[f64; 4]) -> Self {
        Self { lam: z[0].exp(), eta: z[1].exp(), rho: logistic(z[2]), omega: z[3].exp() }
    }

    pub fn reward_params(&self, n: usize) -> Result<RewardParams> {
        RewardParams::with_scalar_omega(n, self.lam, self.eta, self.rho, self.omega)
    }

    /// Every coordinate scaled by `factor`, with ρ kept inside (0, 1).
    pub fn scaled(&self, factor: f64) -> Self {
        let rho = (self.rho * factor).clamp(1e-3, 1.0 - 1e-3);
        Self { lam: self.lam * factor, eta: self.eta * factor, rho, omega: self.omega * factor }
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Quantities held fixed while fitting: the return model, benchmark, prior and solver.
#[derive(Debug, Clone)]
pub struct GirlContext {
    pub rbar: Vec<Vector>,
    pub sigma_r: ReturnCovariance,
    pub benchmark: BenchmarkPath,
    pub prior: PriorPolicy,
    pub solver: SolverConfig,
}

impl GirlContext {
    pub fn n(&self) -> usize {
        self.sigma_r.dim() + 1
    }

    pub fn horizon(&self) -> usize {
        self.rbar.len()
    }

    pub fn solve(&self, theta: &Theta) -> Result<SolvedPlan> {
        theta.validate()?;
        let problem = LqProblem::new(theta.reward_params(self.n())?, self.rbar.clone(), &self.sigma_r, &self.benchmark)?;
        backward_pass(&problem, &self.prior, &self.solver)
            .map_err(|e| Error::Solver { theta: format!("{theta:?}"), source: Box::new(e) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub learning_rate: f64,
    /// Stop once the Euclidean norm of an Adam step falls below this.
    pub stop_tol: f64,
    pub max_iters: usize,
    /// Relative central-difference step in unconstrained coordinates.
    pub fd_step: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Consecutive loss increases that count as divergence.
    pub divergence_patience: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            stop_tol: 1e-8,
            max_iters: 2000,
            fd_step: 1e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            divergence_patience: 50,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.stop_tol, self.fd_step, self.adam_beta1, self.adam_beta2, self.adam_eps];
        if positive.iter().any(|v| !(*v > 0.0)) || self.max_iters == 0 || self.divergence_patience == 0 {
            return Err(Error::InvalidParameter("fit settings must be positive".into()));
        }
        if self.adam_beta1 >= 1.0 || self.adam_beta2 >= 1.0 {
            return Err(Error::InvalidParameter("Adam decay rates must be < 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: Theta,
    pub loss_path: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `−½ log|Σ_r| − ½ ΔᵀΣ_r⁻¹Δ` with `Δ_i = x'_i / (x_i + u_i) − (1 + r̄_i)` over risky assets.
///
/// `rbar` includes the bond at index 0. Risky assets whose position `x_i + u_i`
/// is below [`EPS_POS`] in magnitude drop out together with their rows and
/// columns of `Σ_r`.
pub fn transition_log_prob(
    x_next: &Vector,
    x: &Vector,
    u: &Vector,
    rbar: &Vector,
    sigma_r: &ReturnCovariance,
) -> Result<f64> {
    TransitionModel::new(sigma_r)?.log_prob(x_next, x, u, rbar)
}

/// Transition density with the full-covariance factorization cached.
pub struct TransitionModel<'a> {
    sigma_r: &'a ReturnCovariance,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl<'a> TransitionModel<'a> {
    pub fn new(sigma_r: &'a ReturnCovariance) -> Result<Self> {
        let chol = cholesky(&sigma_r.sigma_r, "return covariance")?;
        let log_det = log_det_chol(&chol);
        Ok(Self { sigma_r, chol, log_det })
    }

    pub fn log_prob(&self, x_next: &Vector, x: &Vector, u: &Vector, rbar: &Vector) -> Result<f64> {
        let k = self.sigma_r.dim();
        let n = k + 1;
        for (ctx, v) in [("transition: x_next", x_next), ("transition: x", x), ("transition: u", u), ("transition: rbar", rbar)] {
            check_len(ctx, n, v.len())?;
        }
        let included: Vec<usize> = (0..k).filter(|&i| (x[i + 1] + u[i + 1]).abs() >= EPS_POS).collect();
        if included.is_empty() {
            return Err(Error::DegenerateTransition { eps: EPS_POS });
        }
        let delta = Vector::from_iterator(
            included.len(),
            included.iter().map(|&i| x_next[i + 1] / (x[i + 1] + u[i + 1]) - (1.0 + rbar[i + 1])),
        );
        if included.len() == k {
            let sol = self.chol.solve(&delta);
            return Ok(-0.5 * self.log_det - 0.5 * delta.dot(&sol));
        }
        let sub = Mat::from_fn(included.len(), included.len(), |a, b| self.sigma_r.sigma_r[(included[a], included[b])]);
        let chol = cholesky(&sub, "return covariance sub-block")?;
        Ok(-0.5 * log_det_chol(&chol) - 0.5 * delta.dot(&chol.solve(&delta)))
    }
}

/// `log π₀(u|x) + β(G_t(x, u) − F_t(x))`, the log-density of the G-learning policy.
///
/// `F_t` here is the log-normalizer of `π₀ e^{βG_t}`, which coincides with the
/// stored free energy at every step but the last.
pub fn action_log_prob(plan: &SolvedPlan, t: usize, x: &Vector, u: &Vector) -> f64 {
    let prior = &plan.policy.prior;
    let n = x.len() as f64;
    let r = u - &prior.u_bar[t] - &prior.v_bar[t] * x;
    let log_prior = -0.5 * n * (2.0 * PI).ln() - 0.5 * plan.prior_log_det - 0.5 * r.dot(&(&plan.prior_precision * &r));
    log_prior + plan.beta * (g_value(plan, t, x, u) - plan.log_partition[t].value(x))
}

/// Log-density of `N(ũ_t + ṽ_t x, Σ̃p)` at `u`.
pub fn posterior_log_density(plan: &SolvedPlan, t: usize, x: &Vector, u: &Vector) -> f64 {
    let post = plan.posterior(t);
    let r = u - post.mean(x);
    let n = x.len() as f64;
    -0.5 * n * (2.0 * PI).ln() + 0.5 * post.log_det_precision - 0.5 * r.dot(&(&post.precision * &r))
}

/// Negative log-likelihood of `trajs` under θ, re-solving the plan for θ.
pub fn trajectory_nll(theta: &Theta, trajs: &[Trajectory], ctx: &GirlContext) -> Result<f64> {
    if trajs.is_empty() {
        return Ok(0.0);
    }
    let plan = ctx.solve(theta)?;
    trajectory_nll_with_plan(&plan, trajs, ctx)
}

pub fn trajectory_nll_with_plan(plan: &SolvedPlan, trajs: &[Trajectory], ctx: &GirlContext) -> Result<f64> {
    let transition = TransitionModel::new(&ctx.sigma_r)?;
    let per_traj: Vec<f64> = trajs
        .par_iter()
        .map(|tr| {
            if tr.horizon() > plan.horizon() {
                return Err(Error::Shape {
                    context: "trajectory_nll: horizon",
                    expected: format!("<= {}", plan.horizon()),
                    actual: tr.horizon().to_string(),
                });
            }
            let mut ll = 0.0;
            for t in 0..tr.horizon() {
                ll += action_log_prob(plan, t, &tr.x[t], &tr.u[t]);
                ll += transition.log_prob(&tr.x[t + 1], &tr.x[t], &tr.u[t], &ctx.rbar[t])?;
            }
            Ok(-ll)
        })
        .collect::<Result<_>>()?;
    Ok(per_traj.iter().sum())
}

/// Per-step sufficient statistics of the observed `(x_t, u_t)` pairs.
#[derive(Debug, Clone)]
struct StepMoments {
    count: f64,
    mean_u: Vector,
    mean_x: Vector,
    /// Centered scatter matrices Σ(u − ū)(u − ū)ᵀ etc.
    s_uu: Mat,
    s_xu: Mat,
    s_xx: Mat,
}

/// Negative log-likelihood over a fixed data set, evaluated through per-step
/// moments of the data so that each evaluation costs one backward pass plus
/// `O(T N³)` independent of the number of trajectories.
#[derive(Debug, Clone)]
pub struct NllObjective {
    pub ctx: GirlContext,
    moments: Vec<StepMoments>,
    /// Summed transition log-density; independent of θ.
    transition_ll: f64,
    n_trajectories: usize,
}

impl NllObjective {
    pub fn new(ctx: GirlContext, trajs: &[Trajectory]) -> Result<Self> {
        let n = ctx.n();
        let horizon = ctx.horizon();
        for tr in trajs {
            if tr.horizon() > horizon {
                return Err(Error::Shape {
                    context: "NllObjective: trajectory horizon",
                    expected: format!("<= {horizon}"),
                    actual: tr.horizon().to_string(),
                });
            }
            check_len("NllObjective: trajectory assets", n, tr.x[0].len())?;
        }
        let mut moments = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let obs: Vec<&Trajectory> = trajs.iter().filter(|tr| tr.horizon() > t).collect();
            let count = obs.len() as f64;
            let mut mean_u = Vector::zeros(n);
            let mut mean_x = Vector::zeros(n);
            for tr in &obs {
                mean_u += &tr.u[t];
                mean_x += &tr.x[t];
            }
            if count > 0.0 {
                mean_u /= count;
                mean_x /= count;
            }
            let mut s_uu = Mat::zeros(n, n);
            let mut s_xu = Mat::zeros(n, n);
            let mut s_xx = Mat::zeros(n, n);
            for tr in &obs {
                let du = &tr.u[t] - &mean_u;
                let dx = &tr.x[t] - &mean_x;
                s_uu.ger(1.0, &du, &du, 1.0);
                s_xu.ger(1.0, &dx, &du, 1.0);
                s_xx.ger(1.0, &dx, &dx, 1.0);
            }
            moments.push(StepMoments { count, mean_u, mean_x, s_uu, s_xu, s_xx });
        }

        let transition = TransitionModel::new(&ctx.sigma_r)?;
        let per_traj: Vec<f64> = trajs
            .par_iter()
            .map(|tr| {
                (0..tr.horizon())
                    .map(|t| transition.log_prob(&tr.x[t + 1], &tr.x[t], &tr.u[t], &ctx.rbar[t]))
                    .sum::<Result<f64>>()
            })
            .collect::<Result<_>>()?;
        let transition_ll = per_traj.iter().sum();
        Ok(Self { ctx, moments, transition_ll, n_trajectories: trajs.len() })
    }

    pub fn n_trajectories(&self) -> usize {
        self.n_trajectories
    }

    pub fn value(&self, theta: &Theta) -> Result<f64> {
        if self.n_trajectories == 0 {
            return Ok(0.0);
        }
        let plan = self.ctx.solve(theta)?;
        Ok(self.value_with_plan(&plan))
    }

    pub fn value_with_plan(&self, plan: &SolvedPlan) -> f64 {
        let n = self.ctx.n() as f64;
        let mut action_ll = 0.0;
        for (t, mom) in self.moments.iter().enumerate() {
            if mom.count == 0.0 {
                continue;
            }
            let post = plan.posterior(t);
            let p = &post.precision;
            let d = &mom.mean_u - &post.u_tilde - &post.v_tilde * &mom.mean_x;
            // Scatter of residuals r = u − ũ − ṽx around their mean.
            let v_sxu = &post.v_tilde * &mom.s_xu;
            let mut scatter = &mom.s_uu - &v_sxu - v_sxu.transpose();
            scatter += &post.v_tilde * &mom.s_xx * post.v_tilde.transpose();
            let quad = mom.count * d.dot(&(p * &d)) + p.component_mul(&scatter).sum();
            action_ll += mom.count * (-0.5 * n * (2.0 * PI).ln() + 0.5 * post.log_det_precision) - 0.5 * quad;
        }
        -(action_ll + self.transition_ll)
    }

    pub fn value_unconstrained(&self, z: &[f64; 4]) -> Result<f64> {
        self.value(&Theta::from_unconstrained(z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difference {
    Central,
    Forward,
    Backward,
}

/// Finite-difference gradient of `f` at `z` with per-coordinate step
/// `rel_step · max(|z_i|, 1)`.
pub fn fd_gradient<F>(f: F, z: &[f64; 4], rel_step: f64, scheme: Difference) -> Result<[f64; 4]>
where
    F: Fn(&[f64; 4]) -> Result<f64> + Sync,
{
    let probe = |i: usize, sign: f64| -> Result<f64> {
        let mut zz = *z;
        zz[i] += sign * rel_step * z[i].abs().max(1.0);
        match f(&zz) {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Gradient { coord: i, name: PARAM_NAMES[i] }),
        }
    };
    let center = if scheme == Difference::Central {
        0.0
    } else {
        match f(z) {
            Ok(v) if v.is_finite() => v,
            _ => return Err(Error::Gradient { coord: 0, name: PARAM_NAMES[0] }),
        }
    };
    let grads: Vec<f64> = (0..4)
        .into_par_iter()
        .map(|i| {
            let h = rel_step * z[i].abs().max(1.0);
            match scheme {
                Difference::Central => Ok((probe(i, 1.0)? - probe(i, -1.0)?) / (2.0 * h)),
                Difference::Forward => Ok((probe(i, 1.0)? - center) / h),
                Difference::Backward => Ok((center - probe(i, -1.0)?) / h),
            }
        })
        .collect::<Result<_>>()?;
    Ok([grads[0], grads[1], grads[2], grads[3]])
}

/// Central-difference gradient of the NLL in unconstrained coordinates.
pub fn nll_gradient(objective: &NllObjective, theta: &Theta, fd_step: f64) -> Result<[f64; 4]> {
    theta.validate()?;
    fd_gradient(|z| objective.value_unconstrained(z), &theta.to_unconstrained(), fd_step, Difference::Central)
}

/// Fits θ by Adam on the negative log-likelihood.
pub fn fit(objective: &NllObjective, cfg: &FitConfig, theta0: &Theta) -> Result<FitReport> {
    cfg.validate()?;
    theta0.validate()?;
    if objective.n_trajectories() == 0 {
        return Err(Error::InvalidParameter("fit needs at least one trajectory".into()));
    }
    let mut adam = Adam::<4>::new(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut z = theta0.to_unconstrained();
    let mut loss_path = Vec::new();
    let mut best = (f64::INFINITY, *theta0);
    let mut streak = 0;
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=cfg.max_iters {
        iterations = k;
        let theta = Theta::from_unconstrained(&z);
        let loss = objective.value(&theta)?;
        if !loss.is_finite() {
            return Err(Error::Gradient { coord: 0, name: PARAM_NAMES[0] });
        }
        if let Some(prev) = loss_path.last() {
            streak = if loss > *prev { streak + 1 } else { 0 };
        }
        loss_path.push(loss);
        if loss < best.0 {
            best = (loss, theta);
        }
        if streak >= cfg.divergence_patience {
            return Err(Error::Divergence { streak, loss_path });
        }
        let grad = fd_gradient(|zz| objective.value_unconstrained(zz), &z, cfg.fd_step, Difference::Central)?;
        let step = adam.step(&grad);
        for i in 0..4 {
            z[i] -= step[i];
        }
        let norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
        log::debug!("fit iter {k}: loss {loss:.6e} step {norm:.3e} theta {theta:?}");
        if norm < cfg.stop_tol {
            converged = true;
            break;
        }
    }
    // The final iterate has not been scored yet.
    let last = Theta::from_unconstrained(&z);
    if let Ok(loss) = objective.value(&last) {
        if loss < best.0 {
            best = (loss, last);
        }
    }
    Ok(FitReport { params: best.1, loss_path, iterations, converged })
}

/// NLL along a 1-D grid through `center` for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSlice {
    pub parameter: String,
    pub values: Vec<f64>,
    pub losses: Vec<f64>,
}

impl LossSlice {
    pub fn argmin(&self) -> usize {
        self.losses
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Strictly decreasing up to the minimum and strictly increasing after it.
    pub fn is_unimodal(&self) -> bool {
        let k = self.argmin();
        self.losses[..=k].windows(2).all(|w| w[1] < w[0]) && self.losses[k..].windows(2).all(|w| w[1] > w[0])
    }

    pub fn range(&self) -> f64 {
        let max = self.losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.losses.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Scans each parameter over `points` values spanning `center · (1 ± half_width)`.
pub fn loss_slices(objective: &NllObjective, center: &Theta, points: usize, half_width: f64) -> Result<Vec<LossSlice>> {
    let base = center.to_array();
    (0..4)
        .map(|i| {
            let values: Vec<f64> = (0..points)
                .map(|k| {
                    let frac = if points > 1 { k as f64 / (points - 1) as f64 } else { 0.5 };
                    base[i] * (1.0 - half_width + 2.0 * half_width * frac)
                })
                .collect();
            let losses = values
                .par_iter()
                .map(|v| {
                    let mut a = base;
                    a[i] = *v;
                    objective.value(&Theta::from_array(a))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(LossSlice { parameter: PARAM_NAMES[i].to_string(), values, losses })
        })
        .collect()
}
