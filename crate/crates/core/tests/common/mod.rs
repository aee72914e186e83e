//! Random small instances and independent reference computations.
#![allow(dead_code)]

use glearn::glearner::{PriorPolicy, SolverConfig};
use glearn::linalg::{Mat, Vector};
use glearn::market::ReturnCovariance;
use glearn::rewards::{BenchmarkPath, RewardParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec<R: Rng>(rng: &mut R, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `A Aᵀ + floor·I` for a random `A`, scaled by `scale`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, scale: f64, floor: f64) -> Mat {
    let a = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&a * a.transpose() / n as f64 + Mat::identity(n, n) * floor) * scale
}

pub fn random_cov<R: Rng>(rng: &mut R, n_risky: usize, scale: f64) -> ReturnCovariance {
    ReturnCovariance::new(random_spd(rng, n_risky, scale, 0.2)).unwrap()
}

/// Expected per-period returns with the bond first.
pub fn random_rbar<R: Rng>(rng: &mut R, n: usize, rf: f64) -> Vector {
    let mut r = Vector::from_fn(n, |_, _| rng.random_range(-0.02..0.05));
    r[0] = rf;
    r
}

pub fn random_params<R: Rng>(rng: &mut R, n: usize) -> RewardParams {
    RewardParams::with_scalar_omega(
        n,
        rng.random_range(0.05..0.5),
        rng.random_range(0.9..1.2),
        rng.random_range(0.1..0.9),
        rng.random_range(0.05..0.5),
    )
    .unwrap()
}

/// A small, well-conditioned problem in units of roughly one dollar.
pub struct SmallInstance {
    pub params: RewardParams,
    pub rbar: Vec<Vector>,
    pub sigma_r: ReturnCovariance,
    pub benchmark: BenchmarkPath,
    pub prior: PriorPolicy,
}

pub fn small_instance<R: Rng>(rng: &mut R, n: usize, horizon: usize) -> SmallInstance {
    let params = random_params(rng, n);
    let rbar = (0..horizon).map(|_| random_rbar(rng, n, 0.005)).collect();
    let sigma_r = random_cov(rng, n - 1, 0.01);
    let benchmark = BenchmarkPath::new((0..horizon).map(|_| rng.random_range(1.0..3.0)).collect()).unwrap();
    let sd = rng.random_range(0.2..0.6);
    let u_bar = Vector::from_fn(n, |_, _| rng.random_range(-0.2..0.2));
    let prior = PriorPolicy::constant(u_bar, random_spd(rng, n, sd * sd, 0.5), horizon).unwrap();
    SmallInstance { params, rbar, sigma_r, benchmark, prior }
}

pub fn solver(beta: f64, gamma: f64) -> SolverConfig {
    SolverConfig { beta, gamma, ..SolverConfig::default() }
}

/// `E[(P̂ − (1+r)ᵀ(x+u))²]` with the bond return fixed and risky returns `~ (r̄, Σ_r)`.
pub fn expected_sq_shortfall(params: &RewardParams, rbar: &Vector, sigma_r: &Mat, b: f64, x: &Vector, u: &Vector) -> f64 {
    let n = x.len();
    let target = (1.0 - params.rho) * b + params.rho * params.eta * x.iter().sum::<f64>();
    let mut mean_next = 0.0;
    for i in 0..n {
        mean_next += (1.0 + rbar[i]) * (x[i] + u[i]);
    }
    let mut var = 0.0;
    for i in 1..n {
        for j in 1..n {
            var += (x[i] + u[i]) * sigma_r[(i - 1, j - 1)] * (x[j] + u[j]);
        }
    }
    (target - mean_next).powi(2) + var
}

/// One-step expected reward written directly from its definition.
pub fn reward_oracle(params: &RewardParams, rbar: &Vector, sigma_r: &Mat, b: f64, x: &Vector, u: &Vector) -> f64 {
    let cash: f64 = u.iter().sum();
    let mut cost = 0.0;
    for i in 0..u.len() {
        for j in 0..u.len() {
            cost += u[i] * params.omega[(i, j)] * u[j];
        }
    }
    -cash - params.lam * expected_sq_shortfall(params, rbar, sigma_r, b, x, u) - cost
}

/// Gradient and Hessian in `u` of a quadratic function, by exact central differences.
pub fn quadratic_in_u<F: Fn(&Vector) -> f64>(f: F, n: usize) -> (Vector, Mat) {
    let h = 1.0;
    let zero = Vector::zeros(n);
    let e = |i: usize| {
        let mut v = Vector::zeros(n);
        v[i] = h;
        v
    };
    let f0 = f(&zero);
    let mut grad = Vector::zeros(n);
    let mut hess = Mat::zeros(n, n);
    for i in 0..n {
        grad[i] = (f(&e(i)) - f(&(-e(i)))) / (2.0 * h);
        hess[(i, i)] = (f(&e(i)) - 2.0 * f0 + f(&(-e(i)))) / (h * h);
        for j in 0..i {
            let pp = f(&(e(i) + e(j)));
            let pm = f(&(e(i) - e(j)));
            let mp = f(&(-e(i) + e(j)));
            let mm = f(&(-e(i) - e(j)));
            hess[(i, j)] = (pp - pm - mp + mm) / (4.0 * h * h);
            hess[(j, i)] = hess[(i, j)];
        }
    }
    (grad, hess)
}

/// Stationary point of a concave quadratic in `u`.
pub fn argmax_quadratic<F: Fn(&Vector) -> f64>(f: F, n: usize) -> Vector {
    let (g, h) = quadratic_in_u(f, n);
    -h.lu().solve(&g).expect("nonsingular Hessian")
}

/// Full quadratic `zᵀ P z + pᵀ z + p0` over `z = (x, u)` or over `x` alone.
#[derive(Clone, Debug)]
pub struct Quad {
    pub p: Mat,
    pub q: Vector,
    pub c: f64,
}

impl Quad {
    pub fn eval(&self, z: &Vector) -> f64 {
        z.dot(&(&self.p * z)) + self.q.dot(z) + self.c
    }
}

/// Deterministic quadratic dynamic programming for the expected-reward problem:
/// `V_{T−1}(x) = max_u R_{T−1}`, `V_t(x) = max_u R_t + γ E V_{t+1}(x')`.
/// Returns per-step feedback `(k_t, K_t)` with `u*(x) = k_t + K_t x` and the value quadratics.
pub fn deterministic_dp(inst: &SmallInstance, gamma: f64) -> (Vec<(Vector, Mat)>, Vec<Quad>) {
    let n = inst.rbar[0].len();
    let horizon = inst.rbar.len();
    let sr = &inst.sigma_r.sigma_r;
    let mut policies = vec![(Vector::zeros(n), Mat::zeros(n, n)); horizon];
    let mut values: Vec<Quad> = vec![Quad { p: Mat::zeros(n, n), q: Vector::zeros(n), c: 0.0 }; horizon];
    let mut next: Option<Quad> = None;
    for t in (0..horizon).rev() {
        let r = &inst.rbar[t];
        let b = inst.benchmark.b[t];
        let v_next = next.clone();
        let objective = |x: &Vector, u: &Vector| -> f64 {
            let mut total = reward_oracle(&inst.params, r, sr, b, x, u);
            if let Some(v) = &v_next {
                // E[zᵀA V A z + (z∘ε)ᵀ V (z∘ε)] with z = x + u.
                let z = x + u;
                let mean = z.component_mul(&r.add_scalar(1.0));
                let mut noise = 0.0;
                for i in 1..n {
                    for j in 1..n {
                        noise += z[i] * z[j] * sr[(i - 1, j - 1)] * v.p[(i, j)];
                    }
                }
                total += gamma * (v.eval(&mean) + noise);
            }
            total
        };
        // Feedback: u*(x) is affine, found from the u-gradient and Hessian at x = 0 and x = e_j.
        let x0 = Vector::zeros(n);
        let k = argmax_quadratic(|u| objective(&x0, u), n);
        let mut kk = Mat::zeros(n, n);
        for j in 0..n {
            let mut xj = Vector::zeros(n);
            xj[j] = 1.0;
            let uj = argmax_quadratic(|u| objective(&xj, u), n);
            kk.set_column(j, &(uj - &k));
        }
        // V_t(x) = objective(x, k + Kx) is quadratic in x; recover its coefficients.
        let value = |x: &Vector| objective(x, &(&k + &kk * x));
        let (g, h) = quadratic_in_u(value, n);
        let c = value(&x0);
        values[t] = Quad { p: h / 2.0, q: g, c };
        policies[t] = (k, kk);
        next = Some(values[t].clone());
    }
    (policies, values)
}

/// Log-density of `N(mean, cov)` at `v`, coded from the textbook formula.
pub fn mvn_log_density(v: &Vector, mean: &Vector, cov: &Mat) -> f64 {
    let n = v.len() as f64;
    let chol = cov.clone().cholesky().expect("SPD covariance");
    let d = v - mean;
    let y = chol.l().solve_lower_triangular(&d).unwrap();
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + log_det + y.norm_squared())
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300).max(a.abs())
}

pub fn max_rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}
