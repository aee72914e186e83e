//! Experiment configuration: one JSON document with a section per stage.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::girl::{FitConfig, GirlContext, Theta};
use crate::glearner::{equal_allocation, PriorPolicy, SolverConfig};
use crate::linalg::Vector;
use crate::market::{MarketSpec, ReturnCovariance};
use crate::rewards::{BenchmarkPath, RewardParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub lam: f64,
    pub eta: f64,
    pub rho: f64,
    /// Scalar transaction-cost weight, `Ω = ω I`.
    pub omega: f64,
    /// Annual continuously compounded growth of the benchmark.
    pub benchmark_rate: f64,
    /// Initial wealth, spread equally over all assets; also the benchmark start.
    pub initial_wealth: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { lam: 0.001, eta: 1.01, rho: 0.4, omega: 0.15, benchmark_rate: 0.5, initial_wealth: 1000.0 }
    }
}

impl RewardConfig {
    pub fn theta(&self) -> Theta {
        Theta { lam: self.lam, eta: self.eta, rho: self.rho, omega: self.omega }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    /// Per-asset standard deviation of reference-policy trades, in dollars.
    pub sigma: f64,
    /// Constant reference-policy trade per asset, in dollars.
    pub u_bar: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { sigma: 10.0, u_bar: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Starting point of the fit, as a multiple of the configured reward parameters.
    pub theta0_scale: f64,
    pub slice_points: usize,
    /// Slices span `θ · (1 ± slice_half_width)` per parameter.
    pub slice_half_width: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { theta0_scale: 2.0, slice_points: 21, slice_half_width: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub output_dir: Option<PathBuf>,
    /// Overrides `market.seed` when present.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub market: MarketSpec,
    pub reward: RewardConfig,
    pub prior: PriorConfig,
    pub solver: SolverConfig,
    pub girl: FitConfig,
    pub analysis: AnalysisConfig,
    pub io: IoConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| Error::MissingInput(path.display().to_string()))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.solver.validate()?;
        self.girl.validate()?;
        self.reward.theta().validate()?;
        if !(self.reward.initial_wealth > 0.0) || !self.reward.benchmark_rate.is_finite() {
            return Err(Error::InvalidParameter("initial wealth must be positive".into()));
        }
        if !(self.prior.sigma > 0.0) {
            return Err(Error::InvalidParameter("prior sigma must be positive".into()));
        }
        if !(self.analysis.theta0_scale > 0.0 && self.analysis.slice_half_width > 0.0 && self.analysis.slice_half_width < 1.0)
        {
            return Err(Error::InvalidParameter("analysis settings out of range".into()));
        }
        Ok(())
    }

    /// Applies `io.seed` (or an explicit override) to the market seed.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed.or(self.io.seed) {
            self.market.seed = s;
            self.io.seed = Some(s);
        }
        self
    }

    pub fn n_assets(&self) -> usize {
        self.market.n_risky + 1
    }

    pub fn rollout_seed(&self) -> u64 {
        self.market.seed ^ 0x9E37_79B9_7F4A_7C15
    }

    pub fn reward_params(&self) -> Result<RewardParams> {
        self.reward.theta().reward_params(self.n_assets())
    }

    pub fn benchmark(&self) -> Result<BenchmarkPath> {
        BenchmarkPath::exponential(
            self.reward.initial_wealth,
            self.reward.benchmark_rate,
            self.market.dt,
            self.market.horizon,
        )
    }

    pub fn prior(&self) -> Result<PriorPolicy> {
        let n = self.n_assets();
        PriorPolicy::constant(
            Vector::from_element(n, self.prior.u_bar),
            nalgebra::DMatrix::identity(n, n) * self.prior.sigma.powi(2),
            self.market.horizon,
        )
    }

    pub fn x0(&self) -> Vector {
        equal_allocation(self.n_assets(), self.reward.initial_wealth)
    }

    pub fn girl_context(&self, rbar: Vec<Vector>, sigma_r: ReturnCovariance) -> Result<GirlContext> {
        Ok(GirlContext {
            rbar,
            sigma_r,
            benchmark: self.benchmark()?,
            prior: self.prior()?,
            solver: self.solver.clone(),
        })
    }
}
