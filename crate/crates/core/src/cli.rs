//! Command-line pipeline: simulate → solve → rollout → fit → report.
//!
//! Each stage reads the previous stage's files from the input directory
//! (the output directory unless `--input` is given) and writes its own.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::girl::{fit, loss_slices, FitReport, NllObjective, Theta};
use crate::glearner::{rollout, rollout_policy, Trajectory};
use crate::io::{self, OutputSet, ReturnKind};
use crate::market::{residual_covariance, simulate, ReturnCovariance, ReturnPaths};
use crate::metrics::{equal_weight_baseline, mean_cash, summarize, PerformanceSummary};

/// Environment variable holding the log filter (`error`, `warn`, `info`, `debug`).
pub const LOG_ENV: &str = "GLEARN_LOG";

#[derive(Debug, Parser)]
#[command(name = "glearn", version, about = "G-learning wealth planner and inverse-RL estimator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: `io.output_dir` from the config, else `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory holding the previous stage's files (default: the output directory).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate expected and realized returns and estimate their covariance.
    Simulate(Common),
    /// Solve the G-learning plan for the configured reward parameters.
    Solve(Common),
    /// Roll the solved policy out along the realized return paths.
    Rollout(Common),
    /// Recover reward parameters from trajectories by maximum likelihood.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Trajectory file (default: `trajectories.csv` in the input directory).
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Compare strategies: Sharpe ratios, mean returns and cash installments.
    Report(Common),
    /// Run every stage end to end into one directory.
    Repro(Common),
}

struct Ctx {
    cfg: ExperimentConfig,
    out_dir: PathBuf,
    in_dir: PathBuf,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self> {
        let cfg = match &common.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        }
        .with_seed(common.seed);
        let out_dir = common
            .out
            .clone()
            .or_else(|| cfg.io.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out_dir)?;
        let in_dir = common.input.clone().unwrap_or_else(|| out_dir.clone());
        Ok(Self { cfg, out_dir, in_dir })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn input(&self, name: &str) -> PathBuf {
        self.in_dir.join(name)
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                let _ = e.print();
            } else {
                eprintln!("error: {}", e.kind_message());
            }
            return code;
        }
    };
    let mut outputs = OutputSet::new();
    match execute(&cli.command, &mut outputs) {
        Ok(()) => 0,
        Err(e) => {
            outputs.remove_all();
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

trait KindMessage {
    fn kind_message(&self) -> String;
}

impl KindMessage for clap::Error {
    fn kind_message(&self) -> String {
        self.to_string().lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ").to_string()
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MissingInput(_) | Error::Config(_) => 2,
        _ => 1,
    }
}

pub fn execute(command: &Command, outputs: &mut OutputSet) -> Result<()> {
    match command {
        Command::Simulate(c) => {
            let ctx = Ctx::new(c)?;
            stage_simulate(&ctx, outputs).map(|_| ())
        }
        Command::Solve(c) => {
            let ctx = Ctx::new(c)?;
            let (paths, sigma_r) = load_market(&ctx, false)?;
            stage_solve(&ctx, &paths, &sigma_r, outputs)
        }
        Command::Rollout(c) => {
            let ctx = Ctx::new(c)?;
            let paths = io::read_returns(&ctx.input(io::RETURNS_EXPECTED), Some(&ctx.input(io::RETURNS_REALIZED)))?;
            let policy = io::read_plan_policy(&ctx.input(io::PLAN))?;
            let trajs = rollout_policy(&policy, &paths, &ctx.cfg.x0(), ctx.cfg.market.rf_period(), ctx.cfg.rollout_seed())?;
            write_rollout(&ctx, &trajs, outputs)
        }
        Command::Fit { common, trajectories } => {
            let ctx = Ctx::new(common)?;
            let traj_path = trajectories.clone().unwrap_or_else(|| ctx.input(io::TRAJECTORIES));
            if !traj_path.exists() {
                return Err(Error::MissingInput(format!("trajectories file {}", traj_path.display())));
            }
            let trajs = io::read_trajectories(&traj_path)?;
            let (paths, sigma_r) = load_market(&ctx, false)?;
            stage_fit(&ctx, &paths, sigma_r, &trajs, outputs).map(|_| ())
        }
        Command::Report(c) => {
            let ctx = Ctx::new(c)?;
            let (paths, sigma_r) = load_market(&ctx, true)?;
            let trajs = io::read_trajectories(&ctx.input(io::TRAJECTORIES))?;
            let report_path = ctx.input(io::GIRL_REPORT);
            let fitted = if report_path.exists() {
                Some(io::read_json::<GirlReport>(&report_path)?.fit.params)
            } else {
                None
            };
            stage_report(&ctx, &paths, sigma_r, &trajs, fitted, outputs)
        }
        Command::Repro(c) => {
            let ctx = Ctx::new(&Common { input: None, ..c.clone() })?;
            let (paths, sigma_r) = stage_simulate(&ctx, outputs)?;
            stage_solve(&ctx, &paths, &sigma_r, outputs)?;
            let plan = ctx.cfg.girl_context(paths.solver_rbar(ctx.cfg.market.rf_period()), sigma_r.clone())?.solve(&ctx.cfg.reward.theta())?;
            let trajs = rollout(&plan, &paths, &ctx.cfg.x0(), ctx.cfg.market.rf_period(), ctx.cfg.rollout_seed())?;
            write_rollout(&ctx, &trajs, outputs)?;
            let report = stage_fit(&ctx, &paths, sigma_r.clone(), &trajs, outputs)?;
            stage_report(&ctx, &paths, sigma_r, &trajs, Some(report.fit.params), outputs)
        }
    }
}

fn load_market(ctx: &Ctx, realized: bool) -> Result<(ReturnPaths, ReturnCovariance)> {
    let realized_path = ctx.input(io::RETURNS_REALIZED);
    let paths = io::read_returns(&ctx.input(io::RETURNS_EXPECTED), realized.then_some(realized_path.as_path()))?;
    let sigma_r = io::read_covariance(&ctx.input(io::SIGMA_R))?;
    if paths.n_risky != ctx.cfg.market.n_risky || paths.horizon != ctx.cfg.market.horizon {
        return Err(Error::Shape {
            context: "return files vs config",
            expected: format!("{} periods x {} risky assets", ctx.cfg.market.horizon, ctx.cfg.market.n_risky),
            actual: format!("{} periods x {} risky assets", paths.horizon, paths.n_risky),
        });
    }
    Ok((paths, sigma_r))
}

fn stage_simulate(ctx: &Ctx, outputs: &mut OutputSet) -> Result<(ReturnPaths, ReturnCovariance)> {
    let paths = simulate(&ctx.cfg.market)?;
    let sigma_r = residual_covariance(&paths)?;
    io::write_returns(&ctx.out(io::RETURNS_EXPECTED), &paths, ReturnKind::Expected, outputs)?;
    io::write_returns(&ctx.out(io::RETURNS_REALIZED), &paths, ReturnKind::Realized, outputs)?;
    io::write_matrix(&ctx.out(io::SIGMA_R), &sigma_r.sigma_r, outputs)?;
    io::write_asset_means(&ctx.out(io::ASSET_MEANS), &paths, outputs)?;
    log::info!("simulated {} paths x {} periods x {} risky assets", paths.n_paths, paths.horizon, paths.n_risky);
    Ok((paths, sigma_r))
}

fn stage_solve(ctx: &Ctx, paths: &ReturnPaths, sigma_r: &ReturnCovariance, outputs: &mut OutputSet) -> Result<()> {
    let gctx = ctx.cfg.girl_context(paths.solver_rbar(ctx.cfg.market.rf_period()), sigma_r.clone())?;
    let plan = gctx.solve(&ctx.cfg.reward.theta())?;
    io::write_plan(&ctx.out(io::PLAN), &plan, outputs)?;
    log::info!("solved plan over {} periods", plan.horizon());
    Ok(())
}

fn write_rollout(ctx: &Ctx, trajs: &[Trajectory], outputs: &mut OutputSet) -> Result<()> {
    io::write_trajectories(&ctx.out(io::TRAJECTORIES), trajs, outputs)?;
    io::write_cash(&ctx.out(io::CASH), trajs, outputs)
}

#[derive(Debug, Serialize, serde::Deserialize)]
pub struct GirlReport {
    pub truth: Theta,
    pub theta0: Theta,
    pub fit: FitReport,
    pub n_trajectories: usize,
    pub nll_at_truth: f64,
    pub nll_at_fit: f64,
}

fn stage_fit(
    ctx: &Ctx,
    paths: &ReturnPaths,
    sigma_r: ReturnCovariance,
    trajs: &[Trajectory],
    outputs: &mut OutputSet,
) -> Result<GirlReport> {
    let gctx = ctx.cfg.girl_context(paths.solver_rbar(ctx.cfg.market.rf_period()), sigma_r)?;
    let objective = NllObjective::new(gctx, trajs)?;
    let truth = ctx.cfg.reward.theta();
    let theta0 = truth.scaled(ctx.cfg.analysis.theta0_scale);
    let report = fit(&objective, &ctx.cfg.girl, &theta0)?;
    log::info!("fit finished after {} iterations (converged: {})", report.iterations, report.converged);
    let slices = loss_slices(&objective, &truth, ctx.cfg.analysis.slice_points, ctx.cfg.analysis.slice_half_width)?;
    let out = GirlReport {
        truth,
        theta0,
        n_trajectories: trajs.len(),
        nll_at_truth: objective.value(&truth)?,
        nll_at_fit: objective.value(&report.params)?,
        fit: report,
    };
    io::write_json(&ctx.out(io::GIRL_REPORT), &out, outputs)?;
    io::write_loss_slices(&ctx.out(io::LOSS_SLICES), &slices, outputs)?;
    Ok(out)
}

#[derive(Debug, Serialize)]
struct StrategySummary {
    strategy: String,
    #[serde(flatten)]
    summary: PerformanceSummary,
}

#[derive(Debug, Serialize)]
struct Summary {
    strategies: Vec<StrategySummary>,
    fitted: Option<Theta>,
}

fn stage_report(
    ctx: &Ctx,
    paths: &ReturnPaths,
    sigma_r: ReturnCovariance,
    trajs: &[Trajectory],
    fitted: Option<Theta>,
    outputs: &mut OutputSet,
) -> Result<()> {
    let cfg = &ctx.cfg;
    let (r_f, dt) = (cfg.market.r_f, cfg.market.dt);
    let params = cfg.reward_params()?;
    let benchmark = cfg.benchmark()?;
    let baseline = equal_weight_baseline(paths, &cfg.x0(), cfg.market.rf_period())?;

    let mut strategies = vec![
        ("equal_weight".to_string(), summarize(&baseline, r_f, dt, &params, &benchmark)?),
        ("g_learner".to_string(), summarize(trajs, r_f, dt, &params, &benchmark)?),
    ];
    if let Some(theta) = fitted {
        let gctx = cfg.girl_context(paths.solver_rbar(cfg.market.rf_period()), sigma_r)?;
        let plan = gctx.solve(&theta)?;
        let imitated = rollout(&plan, paths, &cfg.x0(), cfg.market.rf_period(), cfg.rollout_seed())?;
        strategies.push(("girl".to_string(), summarize(&imitated, r_f, dt, &params, &benchmark)?));
    }
    let series: Vec<(&str, Vec<f64>)> = strategies.iter().map(|(n, s)| (n.as_str(), s.mean_returns.clone())).collect();
    io::write_performance(&ctx.out(io::PERFORMANCE), &series, outputs)?;
    io::write_cash_installments(&ctx.out(io::CASH_INSTALLMENTS), &mean_cash(trajs), outputs)?;
    for (name, s) in &strategies {
        log::info!("{name}: Sharpe {:.4}, mean terminal wealth {:.2}", s.sharpe, s.terminal_wealth.mean);
    }
    let strategies = strategies.into_iter().map(|(strategy, summary)| StrategySummary { strategy, summary }).collect();
    io::write_json(&ctx.out(io::SUMMARY), &Summary { strategies, fitted }, outputs)
}

/// Initializes logging from [`LOG_ENV`], defaulting to warnings only.
pub fn init_logging() {
    let env = env_logger::Env::default().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}
