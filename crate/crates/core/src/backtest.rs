//! Rolling-horizon out-of-sample evaluation with proportional costs.
//!
//! Weights estimated on rows ending at `t` are applied to row `t + 1`. The
//! turnover of period `t` compares the next window's weights with the
//! current weights drifted by realized total returns.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::linalg;
use crate::panel::{Period, ReturnPanel};
use crate::portfolio::{self, PortfolioKind};
use crate::simulation::{DAILY_TARGET, MONTHLY_TARGET};

/// 50 basis points.
pub const DEFAULT_COST: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowMode {
    /// Fixed length, dropping the oldest row each step.
    #[default]
    Rolling,
    /// Always starts at the first row.
    Expanding,
}

impl WindowMode {
    pub fn name(self) -> &'static str {
        match self {
            WindowMode::Rolling => "rolling",
            WindowMode::Expanding => "expanding",
        }
    }
}

impl std::str::FromStr for WindowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rolling" => Ok(WindowMode::Rolling),
            "expanding" => Ok(WindowMode::Expanding),
            other => Err(Error::Invalid(format!("unknown window mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktestConfig {
    /// In-sample window length.
    pub n_in: usize,
    pub estimator: EstimatorKind,
    pub portfolio: PortfolioKind,
    /// Per-period Markowitz target.
    pub rho1: f64,
    /// Proportional transaction cost in decimals.
    pub cost: f64,
    pub window: WindowMode,
}

impl BacktestConfig {
    pub fn new(n_in: usize, estimator: EstimatorKind, portfolio: PortfolioKind) -> Self {
        Self {
            n_in,
            estimator,
            portfolio,
            rho1: DAILY_TARGET,
            cost: DEFAULT_COST,
            window: WindowMode::Rolling,
        }
    }

    /// Default return target for the panel's sampling frequency.
    pub fn target_for(period: Period) -> f64 {
        match period {
            Period::Daily => DAILY_TARGET,
            Period::Monthly => MONTHLY_TARGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    /// Last in-sample row (1-based), so the forecast is for row `t + 1`.
    pub t: usize,
    pub weights: DVector<f64>,
    /// `w_t' r_{t+1}`.
    pub gross_return: f64,
    /// Gross return less proportional trading costs.
    pub net_return: f64,
    /// `sum_j |w_{t+1,j} - w+_{t,j}|`.
    pub turnover: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub variance: f64,
    pub sharpe: f64,
    pub mean_net: f64,
    pub variance_net: f64,
    pub sharpe_net: f64,
    /// Average turnover per period.
    pub turnover: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub periods: Vec<PeriodRecord>,
    pub summary: Summary,
    pub config: BacktestConfig,
}

/// `mean / sqrt(variance)`, `NaN` when the variance is zero.
pub fn sharpe_ratio(mean: f64, variance: f64) -> f64 {
    if variance > 0.0 {
        mean / variance.sqrt()
    } else {
        f64::NAN
    }
}

/// Mean and `(N - 1)`-divisor variance.
fn moments(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let count = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / count;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0);
    (mean, var)
}

/// Out-of-sample summary from per-period records.
pub fn summarize(records: &[PeriodRecord]) -> Result<Summary> {
    if records.len() < 2 {
        return Err(Error::Invalid(format!(
            "at least 2 out-of-sample periods are needed, got {}",
            records.len()
        )));
    }
    let (mean, variance) = moments(records.iter().map(|r| r.gross_return));
    let (mean_net, variance_net) = moments(records.iter().map(|r| r.net_return));
    let turnover = records.iter().map(|r| r.turnover).sum::<f64>() / records.len() as f64;
    Ok(Summary {
        mean,
        variance,
        sharpe: sharpe_ratio(mean, variance),
        mean_net,
        variance_net,
        sharpe_net: sharpe_ratio(mean_net, variance_net),
        turnover,
    })
}

/// Backtest using the configured estimator and portfolio rule.
pub fn roll(panel: &ReturnPanel, cfg: &BacktestConfig) -> Result<BacktestReport> {
    roll_with(panel, cfg, |window| {
        let theta = cfg.estimator.precision(window)?;
        let w = match cfg.portfolio {
            PortfolioKind::Gmv => portfolio::gmv_weights(&theta)?,
            PortfolioKind::Markowitz => {
                portfolio::markowitz_weights(&theta, &linalg::sample_mean(window), cfg.rho1)?
            }
        };
        Ok(w.weights)
    })
}

/// Backtest with a caller-supplied weight rule. Windows are estimated in
/// parallel; the report is assembled in time order.
pub fn roll_with<F>(panel: &ReturnPanel, cfg: &BacktestConfig, weights_for: F) -> Result<BacktestReport>
where
    F: Fn(&ReturnPanel) -> Result<DVector<f64>> + Sync,
{
    let (n, p) = (panel.n_obs(), panel.n_assets());
    if cfg.n_in < 2 || n <= cfg.n_in + 1 {
        return Err(Error::Invalid(format!(
            "need 2 <= n_in and n > n_in + 1, got n_in = {} and n = {n}",
            cfg.n_in
        )));
    }
    if !(cfg.cost >= 0.0) || !cfg.rho1.is_finite() {
        return Err(Error::Invalid("cost must be >= 0 and the target finite".into()));
    }
    if cfg.cost > 0.0 && panel.risk_free().is_none() {
        log::warn!("no risk-free series: total returns for turnover assume a zero risk-free rate");
    }

    let periods = n - cfg.n_in;
    // One extra window supplies the weights that the last period trades into.
    let weights: Vec<DVector<f64>> = (0..=periods)
        .into_par_iter()
        .map(|k| {
            let (start, len) = match cfg.window {
                WindowMode::Rolling => (k, cfg.n_in),
                WindowMode::Expanding => (0, k + cfg.n_in),
            };
            let w = panel.rows(start, len).and_then(|win| weights_for(&win));
            match w {
                Ok(w) if w.len() == p => Ok(w),
                Ok(w) => Err(Error::Dimension {
                    expected: format!("{p} weights"),
                    got: w.len().to_string(),
                }),
                Err(e) => Err(e),
            }
            .map_err(|e| Error::Window {
                window: k,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let data = panel.data();
    let rf_at = |row: usize| panel.risk_free().map_or(0.0, |rf| rf[row]);
    let records: Vec<PeriodRecord> = (0..periods)
        .map(|k| {
            let row = cfg.n_in + k;
            let w = &weights[k];
            let next = &weights[k + 1];
            let r = data.row(row).transpose();
            let gross = w.dot(&r);
            let rf = rf_at(row);
            let total_p = 1.0 + gross + rf;
            let turnover: f64 = (0..p)
                .map(|j| {
                    let drifted = w[j] * (1.0 + r[j] + rf) / total_p;
                    (next[j] - drifted).abs()
                })
                .sum();
            PeriodRecord {
                t: row,
                weights: w.clone(),
                gross_return: gross,
                net_return: gross - cfg.cost * (1.0 + gross) * turnover,
                turnover,
            }
        })
        .collect();

    Ok(BacktestReport {
        summary: summarize(&records)?,
        periods: records,
        config: *cfg,
    })
}
