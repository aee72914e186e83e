//! Strategy evaluation: buy-and-hold baseline, time-weighted returns and Sharpe ratios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glearner::{step_positions, Trajectory};
use crate::linalg::{check_len, Vector};
use crate::market::ReturnPaths;
use crate::rewards::{target_portfolio, BenchmarkPath, RewardParams};

/// Equally weighted portfolio held without trades or contributions.
pub fn equal_weight_baseline(paths: &ReturnPaths, x0: &Vector, rf_period: f64) -> Result<Vec<Trajectory>> {
    check_len("equal_weight_baseline: x0", paths.n_risky + 1, x0.len())?;
    let zero = Vector::zeros(x0.len());
    (0..paths.n_paths)
        .map(|p| {
            let mut xs = Vec::with_capacity(paths.horizon + 1);
            xs.push(x0.clone());
            for t in 0..paths.horizon {
                let next = step_positions(&xs[t], &zero, rf_period, paths.realized_row(p, t));
                xs.push(next);
            }
            Trajectory::new(xs, vec![zero.clone(); paths.horizon])
        })
        .collect()
}

/// Time-weighted return of each period: the installment `c_t` is added to the
/// starting wealth, so contributions are not counted as investment return.
pub fn period_returns(traj: &Trajectory) -> Vec<f64> {
    (0..traj.horizon())
        .map(|t| {
            let invested = traj.wealth(t) + traj.cash[t];
            (traj.wealth(t + 1) - invested) / invested
        })
        .collect()
}

/// Path-averaged period returns.
pub fn mean_returns(trajs: &[Trajectory]) -> Vec<f64> {
    let Some(first) = trajs.first() else { return Vec::new() };
    let mut acc = vec![0.0; first.horizon()];
    for tr in trajs {
        for (a, r) in acc.iter_mut().zip(period_returns(tr)) {
            *a += r;
        }
    }
    acc.iter().map(|a| a / trajs.len() as f64).collect()
}

/// Annualized Sharpe ratio of a series of per-period returns.
pub fn sharpe_ratio(returns: &[f64], r_f: f64, dt: f64) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::InvalidParameter("Sharpe ratio needs at least two returns".into()));
    }
    let excess: Vec<f64> = returns.iter().map(|r| r - r_f * dt).collect();
    let n = excess.len() as f64;
    let mean = excess.iter().sum::<f64>() / n;
    let var = excess.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 1e-14 * mean.abs().max(1e-300)) || sd < 1e-300 {
        return Err(Error::UndefinedSharpe);
    }
    Ok(mean / sd * (1.0 / dt).sqrt())
}

/// Sharpe ratio over every path-period return of a strategy.
pub fn sharpe(trajs: &[Trajectory], r_f: f64, dt: f64) -> Result<f64> {
    if trajs.iter().any(|t| t.horizon() < 2) {
        return Err(Error::InvalidParameter("Sharpe ratio needs at least two periods".into()));
    }
    let pooled: Vec<f64> = trajs.iter().flat_map(period_returns).collect();
    sharpe_ratio(&pooled, r_f, dt)
}

/// Mean of `Σ_{s≤t} r_s` across paths for each period.
pub fn mean_cumulative_returns(trajs: &[Trajectory]) -> Vec<f64> {
    let mut acc = 0.0;
    mean_returns(trajs)
        .into_iter()
        .map(|r| {
            acc += r;
            acc
        })
        .collect()
}

/// Path-averaged cash installment per period.
pub fn mean_cash(trajs: &[Trajectory]) -> Vec<f64> {
    let Some(first) = trajs.first() else { return Vec::new() };
    let mut acc = vec![0.0; first.horizon()];
    for tr in trajs {
        for (a, c) in acc.iter_mut().zip(&tr.cash) {
            *a += c;
        }
    }
    acc.iter().map(|a| a / trajs.len() as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthStats {
    pub mean: f64,
    pub std: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSummary {
    pub mean_returns: Vec<f64>,
    pub sharpe: f64,
    pub terminal_wealth: WealthStats,
    /// Path-averaged `(P̂_{t+1} − V_{t+1})₊`.
    pub shortfall: Vec<f64>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(
    trajs: &[Trajectory],
    r_f: f64,
    dt: f64,
    params: &RewardParams,
    benchmark: &BenchmarkPath,
) -> Result<PerformanceSummary> {
    let first = trajs.first().ok_or_else(|| Error::InvalidParameter("no trajectories to summarize".into()))?;
    let horizon = first.horizon();
    check_len("summarize: benchmark", horizon, benchmark.len())?;
    let mut terminal: Vec<f64> = trajs.iter().map(|t| t.wealth(horizon)).collect();
    let m = terminal.len() as f64;
    let mean = terminal.iter().sum::<f64>() / m;
    let std = (terminal.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0)).sqrt();
    terminal.sort_by(f64::total_cmp);

    let mut shortfall = vec![0.0; horizon];
    for tr in trajs {
        for (t, s) in shortfall.iter_mut().enumerate() {
            let target = target_portfolio(params, benchmark.b[t], &tr.x[t]);
            *s += (target - tr.wealth(t + 1)).max(0.0);
        }
    }
    shortfall.iter_mut().for_each(|s| *s /= m);

    Ok(PerformanceSummary {
        mean_returns: mean_returns(trajs),
        sharpe: sharpe(trajs, r_f, dt)?,
        terminal_wealth: WealthStats {
            mean,
            std,
            q05: quantile(&terminal, 0.05),
            q50: quantile(&terminal, 0.5),
            q95: quantile(&terminal, 0.95),
        },
        shortfall,
    })
}
