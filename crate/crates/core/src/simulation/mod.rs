//! Seeded Monte-Carlo harness: generate a panel with known truth, run each
//! estimator, and score both portfolios against the population.

mod dgp;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub use dgp::{
    generate, DgpKind, DgpParams, DgpSpec, FactorParams, TruthBundle, DAILY_TARGET,
    MONTHLY_TARGET,
};

use crate::error::Result;
use crate::estimators::EstimatorKind;
use crate::linalg::{self, SymmetricMatrix};
use crate::portfolio::{self, PortfolioWeights};

/// Five error measures for one portfolio. `NaN` marks a failed cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortfolioMetrics {
    /// `|estimated variance / true variance - 1|`.
    pub variance_ratio_err: f64,
    /// `|estimated variance - true variance|`.
    pub variance_err: f64,
    /// `|w_hat'(Sigma_hat - Sigma) w_hat|` with the sample covariance.
    pub risk_err: f64,
    /// `||w_hat - w||_1`.
    pub weight_err_l1: f64,
    /// `||w_hat||_1`.
    pub exposure: f64,
}

impl PortfolioMetrics {
    pub const NAMES: [&'static str; 5] = [
        "variance_ratio_err",
        "variance_err",
        "risk_err",
        "weight_err_l1",
        "exposure",
    ];

    pub fn nan() -> Self {
        Self {
            variance_ratio_err: f64::NAN,
            variance_err: f64::NAN,
            risk_err: f64::NAN,
            weight_err_l1: f64::NAN,
            exposure: f64::NAN,
        }
    }

    pub fn values(&self) -> [f64; 5] {
        [
            self.variance_ratio_err,
            self.variance_err,
            self.risk_err,
            self.weight_err_l1,
            self.exposure,
        ]
    }

    fn score(
        weights: &PortfolioWeights,
        variance: f64,
        true_weights: &PortfolioWeights,
        true_variance: f64,
        sigma_hat: &SymmetricMatrix,
        sigma_true: &SymmetricMatrix,
    ) -> Result<Self> {
        Ok(Self {
            variance_ratio_err: (variance / true_variance - 1.0).abs(),
            variance_err: (variance - true_variance).abs(),
            risk_err: portfolio::risk_error(weights, sigma_hat, sigma_true)?,
            weight_err_l1: (&weights.weights - &true_weights.weights).lp_norm(1),
            exposure: portfolio::gross_exposure(weights),
        })
    }
}

/// GMV and Markowitz metrics for one estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorMetrics {
    pub gmv: PortfolioMetrics,
    pub markowitz: PortfolioMetrics,
}

impl EstimatorMetrics {
    pub fn nan() -> Self {
        Self {
            gmv: PortfolioMetrics::nan(),
            markowitz: PortfolioMetrics::nan(),
        }
    }

    /// `(metric name, value)` pairs in a fixed order, GMV first.
    pub fn named(&self) -> Vec<(String, f64)> {
        let mut out = Vec::with_capacity(10);
        for (prefix, m) in [("gmv", &self.gmv), ("markowitz", &self.markowitz)] {
            for (name, v) in PortfolioMetrics::NAMES.iter().zip(m.values()) {
                out.push((format!("{prefix}_{name}"), v));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub seed: u64,
    pub records: Vec<(EstimatorKind, EstimatorMetrics)>,
}

impl ReplicationResult {
    pub fn get(&self, kind: EstimatorKind) -> Option<&EstimatorMetrics> {
        self.records.iter().find(|(k, _)| *k == kind).map(|(_, m)| m)
    }
}

/// Scores a precision estimate against the truth. Each portfolio fails
/// independently to `NaN`.
pub fn evaluate_precision(
    theta_hat: &DMatrix<f64>,
    mu_hat: &DVector<f64>,
    sigma_hat: &SymmetricMatrix,
    truth: &TruthBundle,
    rho1: f64,
) -> EstimatorMetrics {
    let gmv = (|| {
        let w = portfolio::gmv_weights(theta_hat)?;
        let v = portfolio::gmv_variance(theta_hat)?.value;
        PortfolioMetrics::score(
            &w,
            v,
            &truth.w_true_gmv,
            truth.phi_true.value,
            sigma_hat,
            &truth.sigma_true,
        )
    })()
    .unwrap_or_else(|_| PortfolioMetrics::nan());
    let markowitz = (|| {
        let w = portfolio::markowitz_weights(theta_hat, mu_hat, rho1)?;
        let v = portfolio::markowitz_variance(theta_hat, mu_hat, rho1)?.value;
        PortfolioMetrics::score(
            &w,
            v,
            &truth.w_true_mkw,
            truth.psi_true.value,
            sigma_hat,
            &truth.sigma_true,
        )
    })()
    .unwrap_or_else(|_| PortfolioMetrics::nan());
    EstimatorMetrics { gmv, markowitz }
}

/// One replication: draw with `seed`, estimate with every requested
/// estimator, and score. Estimator failures become `NaN` cells.
pub fn run_replication(
    spec: &DgpSpec,
    estimators: &[EstimatorKind],
    rho1: f64,
    seed: u64,
) -> Result<ReplicationResult> {
    let spec = DgpSpec { rho1, ..*spec };
    let (panel, truth) = generate(&spec, seed)?;
    let sigma_hat = linalg::sample_covariance(&panel);
    let mu_hat = linalg::sample_mean(&panel);
    let records = estimators
        .iter()
        .map(|&kind| {
            let metrics = match kind.precision(&panel) {
                Ok(theta) => evaluate_precision(&theta, &mu_hat, &sigma_hat, &truth, rho1),
                Err(e) => {
                    log::debug!("seed {seed}: {kind} failed: {e}");
                    EstimatorMetrics::nan()
                }
            };
            (kind, metrics)
        })
        .collect();
    Ok(ReplicationResult { seed, records })
}

/// Median of the finite-or-infinite values, ignoring `NaN`; also returns the
/// number of `NaN`s skipped.
pub fn nan_median(values: &[f64]) -> (f64, usize) {
    let mut kept: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    let nan_count = values.len() - kept.len();
    if kept.is_empty() {
        return (f64::NAN, nan_count);
    }
    kept.sort_by(f64::total_cmp);
    let m = kept.len();
    let median = if m % 2 == 1 {
        kept[m / 2]
    } else {
        0.5 * (kept[m / 2 - 1] + kept[m / 2])
    };
    (median, nan_count)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub dgp: DgpKind,
    pub p: usize,
    pub n: usize,
    pub estimator: EstimatorKind,
    pub metric: String,
    pub median: f64,
    pub nan_count: usize,
    pub reps: usize,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    pub specs: Vec<DgpSpec>,
    pub rho1: f64,
}

impl StudyTable {
    pub fn median(&self, dgp: DgpKind, p: usize, estimator: EstimatorKind, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.dgp == dgp && r.p == p && r.estimator == estimator && r.metric == metric)
            .map(|r| r.median)
    }
}

/// Runs `reps` replications of every spec (replication `r` uses seed
/// `base_seed + r`) and reports per-cell medians, sorted by `(dgp, p)`.
/// Output is independent of how rayon schedules the replications.
pub fn run_study(
    spec_grid: &[DgpSpec],
    estimators: &[EstimatorKind],
    reps: usize,
    base_seed: u64,
    rho1: f64,
) -> Result<StudyTable> {
    if reps == 0 {
        return Err(crate::Error::Invalid("a study needs at least one replication".into()));
    }
    let mut specs = spec_grid.to_vec();
    specs.sort_by(|a, b| (a.kind, a.p, a.n).cmp(&(b.kind, b.p, b.n)));

    let jobs: Vec<(usize, u64)> = (0..specs.len())
        .flat_map(|s| (0..reps as u64).map(move |r| (s, base_seed.wrapping_add(r))))
        .collect();
    let results: Vec<ReplicationResult> = jobs
        .par_iter()
        .map(|&(s, seed)| run_replication(&specs[s], estimators, rho1, seed))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (s, spec) in specs.iter().enumerate() {
        let block = &results[s * reps..(s + 1) * reps];
        for &kind in estimators {
            let per_rep: Vec<Vec<(String, f64)>> = block
                .iter()
                .map(|r| r.get(kind).map(|m| m.named()).unwrap_or_default())
                .collect();
            for (i, (metric, _)) in per_rep[0].iter().enumerate() {
                let values: Vec<f64> = per_rep.iter().map(|m| m[i].1).collect();
                let (median, nan_count) = nan_median(&values);
                rows.push(StudyRow {
                    dgp: spec.kind,
                    p: spec.p,
                    n: spec.n,
                    estimator: kind,
                    metric: metric.clone(),
                    median,
                    nan_count,
                    reps,
                    base_seed,
                });
            }
        }
    }
    Ok(StudyTable { rows, specs, rho1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_ignores_nan() {
        assert_eq!(nan_median(&[3.0, f64::NAN, 1.0, 2.0]), (2.0, 1));
        assert_eq!(nan_median(&[4.0, 1.0]), (2.5, 0));
        let (m, c) = nan_median(&[f64::NAN]);
        assert!(m.is_nan());
        assert_eq!(c, 1);
    }

    #[test]
    fn median_is_order_free() {
        let a = [0.3, 0.1, 0.9, 0.5, 0.7];
        let mut b = a;
        b.reverse();
        assert_eq!(nan_median(&a), nan_median(&b));
    }

    #[test]
    fn zero_reps_rejected() {
        let spec = DgpSpec::new(DgpKind::Toeplitz, 5, 50);
        assert!(run_study(&[spec], &[EstimatorKind::LedoitWolf], 0, 1, DAILY_TARGET).is_err());
    }
}
