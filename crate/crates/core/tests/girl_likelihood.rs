mod common;

use common::*;
use glearn::config::ExperimentConfig;
use glearn::girl::*;
use glearn::glearner::*;
use glearn::linalg::{Mat, Vector};
use glearn::market::{residual_covariance, simulate, ReturnCovariance};
use glearn::Error;
use rand::Rng;
use std::f64::consts::PI;

struct Fixture {
    cfg: ExperimentConfig,
    ctx: GirlContext,
    trajs: Vec<Trajectory>,
}

fn fixture(beta: f64, n_paths: usize) -> Fixture {
    let mut cfg = ExperimentConfig::default();
    cfg.market.n_risky = 3;
    cfg.market.horizon = 5;
    cfg.market.n_paths = n_paths;
    cfg.market.seed = 11;
    cfg.solver.beta = beta;
    let paths = simulate(&cfg.market).unwrap();
    let sigma_r = residual_covariance(&paths).unwrap();
    let ctx = cfg.girl_context(paths.solver_rbar(cfg.market.rf_period()), sigma_r).unwrap();
    let plan = ctx.solve(&cfg.reward.theta()).unwrap();
    let trajs = rollout(&plan, &paths, &cfg.x0(), cfg.market.rf_period(), cfg.rollout_seed()).unwrap();
    Fixture { cfg, ctx, trajs }
}

#[test]
fn scalar_transition_density() {
    let s2: f64 = 0.0123;
    let cov = ReturnCovariance::new(Mat::from_element(1, 1, s2)).unwrap();
    let x = Vector::from_vec(vec![5.0, 40.0]);
    let u = Vector::from_vec(vec![1.0, -3.0]);
    let rbar = Vector::from_vec(vec![0.005, 0.02]);
    for x_next in [37.0, 38.0, 41.5] {
        let xn = Vector::from_vec(vec![6.03, x_next]);
        let d = x_next / 37.0 - 1.02;
        let density = (-(d * d) / (2.0 * s2)).exp() / (2.0 * PI * s2).sqrt();
        let want = density.ln() + 0.5 * (2.0 * PI).ln();
        let got = transition_log_prob(&xn, &x, &u, &rbar, &cov).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn multivariate_transition_density() {
    let mut r = rng(31);
    for _ in 0..20 {
        let cov = random_cov(&mut r, 3, 0.02);
        let x = Vector::from_fn(4, |_, _| r.random_range(10.0..50.0));
        let u = Vector::from_fn(4, |_, _| r.random_range(-5.0..5.0));
        let rbar = random_rbar(&mut r, 4, 0.005);
        let x_next = Vector::from_fn(4, |i, _| (x[i] + u[i]) * r.random_range(0.8..1.2));
        let delta = Vector::from_fn(3, |i, _| x_next[i + 1] / (x[i + 1] + u[i + 1]) - 1.0 - rbar[i + 1]);
        let want = mvn_log_density(&delta, &Vector::zeros(3), &cov.sigma_r) + 1.5 * (2.0 * PI).ln();
        let got = transition_log_prob(&x_next, &x, &u, &rbar, &cov).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn transition_at_the_mean() {
    let mut r = rng(32);
    let cov = random_cov(&mut r, 3, 0.02);
    let x = Vector::from_element(4, 10.0);
    let u = Vector::from_vec(vec![1.0, 2.0, -3.0, 0.5]);
    let rbar = random_rbar(&mut r, 4, 0.005);
    let x_next = (&x + &u).component_mul(&rbar.add_scalar(1.0));
    let log_det = cov.sigma_r.determinant().ln();
    let got = transition_log_prob(&x_next, &x, &u, &rbar, &cov).unwrap();
    assert!((got + 0.5 * log_det).abs() < 1e-12);
}

#[test]
fn action_log_prob_is_the_posterior_density() {
    let mut r = rng(33);
    for _ in 0..100 {
        let n = r.random_range(2..=4);
        let inst = small_instance(&mut r, n, 3);
        let problem = LqProblem::new(inst.params.clone(), inst.rbar.clone(), &inst.sigma_r, &inst.benchmark).unwrap();
        let plan = backward_pass(&problem, &inst.prior, &solver(r.random_range(0.5..50.0), 0.95)).unwrap();
        let t = r.random_range(0..3);
        let x = normal_vec(&mut r, n);
        let post = plan.posterior(t);
        let u = post.mean(&x) + normal_vec(&mut r, n) * post.sigma_p_tilde.diagonal().amax().sqrt();
        let a = action_log_prob(&plan, t, &x, &u);
        let b = mvn_log_density(&u, &post.mean(&x), &post.sigma_p_tilde);
        assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{a} vs {b}");
        assert!((posterior_log_density(&plan, t, &x, &u) - b).abs() < 1e-8 * b.abs().max(1.0));
    }
}

#[test]
fn density_at_the_posterior_mode() {
    let mut r = rng(34);
    let inst = small_instance(&mut r, 3, 3);
    let problem = LqProblem::new(inst.params.clone(), inst.rbar.clone(), &inst.sigma_r, &inst.benchmark).unwrap();
    let plan = backward_pass(&problem, &inst.prior, &solver(20.0, 0.95)).unwrap();
    let x = normal_vec(&mut r, 3);
    for t in 0..3 {
        let post = plan.posterior(t);
        let want = -0.5 * (3.0 * (2.0 * PI).ln() + post.sigma_p_tilde.determinant().ln());
        assert!((action_log_prob(&plan, t, &x, &post.mean(&x)) - want).abs() < 1e-8);
    }
}

#[test]
fn vanishing_beta_gives_the_prior_density() {
    let mut r = rng(35);
    let inst = small_instance(&mut r, 3, 2);
    let problem = LqProblem::new(inst.params.clone(), inst.rbar.clone(), &inst.sigma_r, &inst.benchmark).unwrap();
    let plan = backward_pass(&problem, &inst.prior, &solver(1e-12, 0.95)).unwrap();
    let x = normal_vec(&mut r, 3);
    let u = normal_vec(&mut r, 3);
    let want = mvn_log_density(&u, &(&inst.prior.u_bar[0] + &inst.prior.v_bar[0] * &x), &inst.prior.sigma_p);
    assert!((action_log_prob(&plan, 0, &x, &u) - want).abs() < 1e-10);
}

#[test]
fn empty_and_single_step_likelihoods() {
    let f = fixture(1000.0, 40);
    let theta = f.cfg.reward.theta();
    assert_eq!(trajectory_nll(&theta, &[], &f.ctx).unwrap(), 0.0);

    let tr = &f.trajs[0];
    let one = Trajectory::new(tr.x[..2].to_vec(), tr.u[..1].to_vec()).unwrap();
    let plan = f.ctx.solve(&theta).unwrap();
    let want = -(action_log_prob(&plan, 0, &one.x[0], &one.u[0])
        + transition_log_prob(&one.x[1], &one.x[0], &one.u[0], &f.ctx.rbar[0], &f.ctx.sigma_r).unwrap());
    let got = trajectory_nll(&theta, std::slice::from_ref(&one), &f.ctx).unwrap();
    assert!((got - want).abs() <= 1e-12 * want.abs());
}

#[test]
fn trajectories_enter_additively() {
    let f = fixture(1000.0, 40);
    let theta = f.cfg.reward.theta().scaled(1.1);
    let (a, b) = f.trajs.split_at(15);
    let whole = trajectory_nll(&theta, &f.trajs, &f.ctx).unwrap();
    let parts = trajectory_nll(&theta, a, &f.ctx).unwrap() + trajectory_nll(&theta, b, &f.ctx).unwrap();
    assert!((whole - parts).abs() <= 1e-12 * whole.abs());
}

#[test]
fn moment_objective_equals_direct_likelihood() {
    let f = fixture(1000.0, 40);
    let obj = NllObjective::new(f.ctx.clone(), &f.trajs).unwrap();
    for factor in [0.7, 1.0, 1.4] {
        let theta = f.cfg.reward.theta().scaled(factor);
        let direct = trajectory_nll(&theta, &f.trajs, &f.ctx).unwrap();
        let fast = obj.value(&theta).unwrap();
        assert!((direct - fast).abs() < 1e-9 * direct.abs(), "{direct} vs {fast}");
    }
}

#[test]
fn reparameterization_round_trip() {
    let mut r = rng(36);
    for _ in 0..100 {
        let theta = Theta {
            lam: r.random_range(1e-5..1.0),
            eta: r.random_range(0.5..2.0),
            rho: r.random_range(0.01..0.99),
            omega: r.random_range(1e-3..2.0),
        };
        let back = Theta::from_unconstrained(&theta.to_unconstrained());
        for (a, b) in back.to_array().iter().zip(theta.to_array()) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }
}

#[test]
fn central_differences_are_second_order() {
    let f = fixture(1000.0, 60);
    let obj = NllObjective::new(f.ctx.clone(), &f.trajs).unwrap();
    let z = f.cfg.reward.theta().scaled(1.2).to_unconstrained();
    let g = |h: f64| fd_gradient(|zz| obj.value_unconstrained(zz), &z, h, Difference::Central).unwrap();
    let h = 2e-3;
    let (g1, g2, g4) = (g(h), g(2.0 * h), g(4.0 * h));
    for i in 0..4 {
        // Truncation error c·h²: successive differences shrink by a factor 4.
        let ratio = (g4[i] - g2[i]) / (g2[i] - g1[i]);
        assert!((ratio - 4.0).abs() < 0.2, "coordinate {i}: ratio {ratio}");
    }
}

#[test]
fn one_sided_differences_bracket_the_central_one() {
    let f = fixture(1000.0, 60);
    let obj = NllObjective::new(f.ctx.clone(), &f.trajs).unwrap();
    let z = f.cfg.reward.theta().to_unconstrained();
    let h = 1e-3;
    let fwd = fd_gradient(|zz| obj.value_unconstrained(zz), &z, h, Difference::Forward).unwrap();
    let bwd = fd_gradient(|zz| obj.value_unconstrained(zz), &z, h, Difference::Backward).unwrap();
    let ctr = fd_gradient(|zz| obj.value_unconstrained(zz), &z, h, Difference::Central).unwrap();
    for i in 0..4 {
        let (lo, hi) = (fwd[i].min(bwd[i]), fwd[i].max(bwd[i]));
        assert!(lo <= ctr[i] && ctr[i] <= hi, "coordinate {i}: {lo} {} {hi}", ctr[i]);
    }
}

#[test]
fn gradient_is_stable_across_step_sizes() {
    let f = fixture(1000.0, 60);
    let obj = NllObjective::new(f.ctx.clone(), &f.trajs).unwrap();
    let mut r = rng(37);
    for _ in 0..3 {
        let theta = Theta {
            lam: 0.001 * r.random_range(0.5..2.0),
            eta: 1.01 * r.random_range(0.8..1.3),
            rho: r.random_range(0.2..0.7),
            omega: 0.15 * r.random_range(0.5..2.0),
        };
        let a = nll_gradient(&obj, &theta, 1e-4).unwrap();
        let b = nll_gradient(&obj, &theta, 1e-5).unwrap();
        for i in 0..4 {
            assert!((a[i] - b[i]).abs() <= 0.01 * b[i].abs(), "coordinate {i}: {} vs {}", a[i], b[i]);
        }
    }
}

#[test]
fn gradient_at_slice_minimum_is_bounded_by_the_grid() {
    let f = fixture(1000.0, 60);
    let obj = NllObjective::new(f.ctx.clone(), &f.trajs).unwrap();
    let center = f.cfg.reward.theta().to_unconstrained();
    let h = 0.01;
    for i in 0..4 {
        let value = |k: i32| {
            let mut z = center;
            z[i] += k as f64 * h;
            obj.value_unconstrained(&z).unwrap()
        };
        let values: Vec<f64> = (-10..=10).map(value).collect();
        let k = (1..20).min_by(|a, b| values[*a].total_cmp(&values[*b])).unwrap();
        let mut z = center;
        z[i] += (k as f64 - 10.0) * h;
        let step = h / z[i].abs().max(1.0);
        let g = fd_gradient(|zz| obj.value_unconstrained(zz), &z, step * 1e-2, Difference::Central).unwrap()[i];
        let bound = (values[k + 1] + values[k - 1] - 2.0 * values[k]) / h;
        assert!(g.abs() <= bound, "coordinate {i}: |{g}| > {bound}");
    }
}

#[test]
fn fit_started_at_the_truth_stays_there() {
    let f = fixture(1000.0, 200);
    let obj = NllObjective::new(f.ctx.clone(), &f.trajs).unwrap();
    let truth = f.cfg.reward.theta();
    let cfg = FitConfig { max_iters: 10, ..FitConfig::default() };
    let report = fit(&obj, &cfg, &truth).unwrap();
    assert!(report.iterations <= 10);
    for (a, b) in report.params.to_array().iter().zip(truth.to_array()) {
        assert!((a - b).abs() <= 1e-3 * b, "{a} vs {b}");
    }
}

#[test]
fn prior_only_data_is_uninformative_about_lambda() {
    let f = fixture(1e-12, 60);
    let obj = NllObjective::new(f.ctx.clone(), &f.trajs).unwrap();
    let slices = loss_slices(&obj, &f.cfg.reward.theta(), 21, 0.5).unwrap();
    let lam = slices.iter().find(|s| s.parameter == "lambda").unwrap();
    assert!(lam.range() < 1e-6, "range {}", lam.range());
}

#[test]
fn fit_rejects_empty_data_and_bad_settings() {
    let f = fixture(1000.0, 40);
    let obj = NllObjective::new(f.ctx.clone(), &[]).unwrap();
    assert!(fit(&obj, &FitConfig::default(), &f.cfg.reward.theta()).is_err());
    let obj = NllObjective::new(f.ctx.clone(), &f.trajs).unwrap();
    let bad = FitConfig { learning_rate: 0.0, ..FitConfig::default() };
    assert!(matches!(fit(&obj, &bad, &f.cfg.reward.theta()), Err(Error::InvalidParameter(_))));
    let infeasible = Theta { rho: 1.5, ..f.cfg.reward.theta() };
    assert!(fit(&obj, &FitConfig::default(), &infeasible).is_err());
}

#[test]
fn non_finite_objective_names_the_coordinate() {
    let z = [0.0; 4];
    let err = fd_gradient(|zz| Ok(if zz[2] > 0.0 { f64::NAN } else { 1.0 }), &z, 1e-5, Difference::Central).unwrap_err();
    assert!(matches!(err, Error::Gradient { coord: 2, name: "rho" }));
}
