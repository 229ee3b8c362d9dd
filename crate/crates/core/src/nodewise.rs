//! Relaxed inverse of the sample covariance from `p` nodewise lasso
//! regressions.
//!
//! Row `j` regresses asset `j` on every other asset, selects its own penalty
//! by modified BIC, and becomes `C_j / tau_j^2` where `C_j` holds `1` on the
//! diagonal and the negated slopes elsewhere. The result approximately
//! inverts the sample covariance and is generally not symmetric.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lasso::{self, GramProblem, Solver};
use crate::linalg::{self, SymmetricMatrix};
use crate::panel::ReturnPanel;

/// Rows whose residual scale falls to this level are treated as perfectly
/// explained by the other assets.
pub const TAU_SQ_FLOOR: f64 = 1e-12;
/// Slack allowed in the KKT audit.
pub const KKT_AUDIT_TOL: f64 = 1e-8;
/// Fewest observations accepted by [`nodewise_precision`].
pub const MIN_OBS: usize = 10;

/// How each row's penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    /// Modified BIC over a geometric grid from `lambda_max` down to
    /// `ratio * lambda_max`.
    Bic { grid_len: usize, ratio: f64 },
    /// The same penalty for every row.
    Fixed(f64),
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Bic {
            grid_len: lasso::GRID_LEN,
            ratio: lasso::GRID_RATIO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodewiseConfig {
    pub lambda: LambdaRule,
    /// Replace the estimate by the eigen-cleaned symmetric part. Off by
    /// default; the portfolio formulas only need quadratic forms.
    pub pd_repair: bool,
}

/// One nodewise regression.
#[derive(Debug, Clone, PartialEq)]
pub struct NodewiseRow {
    /// Slopes on the other `p - 1` assets, in asset order with `j` skipped.
    pub gamma: DVector<f64>,
    pub tau_sq: f64,
    pub lambda: f64,
    pub support_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    pub theta: DMatrix<f64>,
    pub tau_sq: DVector<f64>,
    pub lambdas: DVector<f64>,
    pub support_sizes: Vec<usize>,
    pub gamma_hat: Vec<DVector<f64>>,
    pub labels: Vec<String>,
    pub repaired: bool,
}

impl PrecisionEstimate {
    pub fn dim(&self) -> usize {
        self.theta.nrows()
    }

    /// `C` with unit diagonal and negated slopes off the diagonal.
    pub fn c_matrix(&self) -> DMatrix<f64> {
        let p = self.dim();
        let mut c = DMatrix::identity(p, p);
        for (j, gamma) in self.gamma_hat.iter().enumerate() {
            for (pos, &g) in gamma.iter().enumerate() {
                let k = if pos < j { pos } else { pos + 1 };
                c[(j, k)] = -g;
            }
        }
        c
    }
}

/// Per-row KKT audit entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktGap {
    /// `||Sigma theta_j' - e_j||_inf`.
    pub gap: f64,
    /// `lambda_j / tau_j^2`.
    pub bound: f64,
    /// `|(Sigma theta_j')_j - 1|`.
    pub diagonal_error: f64,
}

fn row_problem(sigma: &DMatrix<f64>, j: usize) -> GramProblem {
    let p = sigma.nrows();
    let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
    let gram = sigma.select_rows(&others).select_columns(&others);
    let cross = DVector::from_iterator(p - 1, others.iter().map(|&k| sigma[(k, j)]));
    GramProblem {
        gram,
        cross,
        yy: sigma[(j, j)],
    }
}

fn row_from_covariance(
    sigma: &DMatrix<f64>,
    j: usize,
    n: usize,
    rule: LambdaRule,
) -> Result<NodewiseRow> {
    let p = sigma.nrows();
    let problem = row_problem(sigma, j);
    let fit = match rule {
        LambdaRule::Fixed(lambda) => {
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(Error::Invalid(format!("penalty must be finite and >= 0, got {lambda}")));
            }
            let mut solver = Solver::new(&problem);
            let sweeps = solver.fit(lambda)
                + solver.polish(lambda);
            solver.to_fit(lambda, sweeps)
        }
        LambdaRule::Bic { grid_len, ratio } => {
            let lambda_max = problem.lambda_max();
            if lambda_max > 0.0 {
                let grid = lasso::lambda_grid(lambda_max, grid_len, ratio);
                lasso::select_lambda_bic_gram(&problem, &grid, n, p)?.1
            } else {
                Solver::new(&problem).to_fit(0.0, 0)
            }
        }
    };
    let tau_sq = fit.residual_ss_over_n + fit.lambda * fit.l1_norm();
    if !(tau_sq > TAU_SQ_FLOOR) {
        return Err(Error::DegenerateAsset {
            index: j,
            label: format!("#{j}"),
            tau_sq,
        });
    }
    Ok(NodewiseRow {
        support_size: fit.support.len(),
        gamma: fit.coefficients,
        tau_sq,
        lambda: fit.lambda,
    })
}

/// Nodewise regression of column `j` on the rest. Columns must already be
/// demeaned.
pub fn nodewise_row(centered: &DMatrix<f64>, j: usize) -> Result<NodewiseRow> {
    nodewise_row_with(centered, j, LambdaRule::default())
}

pub fn nodewise_row_with(centered: &DMatrix<f64>, j: usize, rule: LambdaRule) -> Result<NodewiseRow> {
    let (n, p) = centered.shape();
    if j >= p || p < 2 {
        return Err(Error::Invalid(format!("asset index {j} out of range for {p} assets")));
    }
    if centered.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("nodewise design"));
    }
    let sigma = linalg::covariance_of_centered(centered);
    row_from_covariance(sigma.as_matrix(), j, n, rule)
}

pub fn nodewise_precision(panel: &ReturnPanel) -> Result<PrecisionEstimate> {
    nodewise_precision_with(panel, &NodewiseConfig::default())
}

/// Runs every row (in parallel), assembles `T^-2 C`, and audits the KKT
/// identities against the sample covariance before returning.
pub fn nodewise_precision_with(
    panel: &ReturnPanel,
    config: &NodewiseConfig,
) -> Result<PrecisionEstimate> {
    let (n, p) = (panel.n_obs(), panel.n_assets());
    if n < MIN_OBS {
        return Err(Error::Invalid(format!(
            "nodewise estimation needs at least {MIN_OBS} observations, got {n}"
        )));
    }
    let sigma = linalg::sample_covariance(panel);
    let rows: Vec<NodewiseRow> = (0..p)
        .into_par_iter()
        .map(|j| {
            row_from_covariance(sigma.as_matrix(), j, n, config.lambda).map_err(|e| match e {
                Error::DegenerateAsset { index, tau_sq, .. } => Error::DegenerateAsset {
                    index,
                    label: panel.labels()[index].clone(),
                    tau_sq,
                },
                other => other,
            })
        })
        .collect::<Result<_>>()?;

    let mut theta = DMatrix::zeros(p, p);
    for (j, row) in rows.iter().enumerate() {
        let inv = 1.0 / row.tau_sq;
        theta[(j, j)] = inv;
        for (pos, &g) in row.gamma.iter().enumerate() {
            let k = if pos < j { pos } else { pos + 1 };
            theta[(j, k)] = -g * inv;
        }
    }

    let mut est = PrecisionEstimate {
        theta,
        tau_sq: DVector::from_iterator(p, rows.iter().map(|r| r.tau_sq)),
        lambdas: DVector::from_iterator(p, rows.iter().map(|r| r.lambda)),
        support_sizes: rows.iter().map(|r| r.support_size).collect(),
        gamma_hat: rows.into_iter().map(|r| r.gamma).collect(),
        labels: panel.labels().to_vec(),
        repaired: false,
    };

    for (j, gap) in kkt_report(&est, &sigma)?.into_iter().enumerate() {
        if gap.diagonal_error > KKT_AUDIT_TOL || gap.gap > gap.bound + KKT_AUDIT_TOL {
            return Err(Error::KktViolation {
                index: j,
                detail: format!(
                    "gap {:e}, bound {:e}, diagonal error {:e}",
                    gap.gap, gap.bound, gap.diagonal_error
                ),
            });
        }
    }

    if config.pd_repair {
        let sym = (&est.theta + est.theta.transpose()) * 0.5;
        let cleaned = linalg::eigen_clean(&SymmetricMatrix::from_upper(sym)?, linalg::EIGEN_FLOOR)?;
        est.theta = cleaned.into_inner();
        est.repaired = true;
    }
    Ok(est)
}

/// Observed `||Sigma theta_j' - e_j||_inf` against `lambda_j / tau_j^2` for
/// every row.
pub fn kkt_report(est: &PrecisionEstimate, sigma_hat: &SymmetricMatrix) -> Result<Vec<KktGap>> {
    let p = est.dim();
    if sigma_hat.dim() != p || est.tau_sq.len() != p || est.lambdas.len() != p {
        return Err(Error::Dimension {
            expected: format!("{p}x{p}"),
            got: format!("{}x{}", sigma_hat.dim(), sigma_hat.dim()),
        });
    }
    // Column j of Sigma * theta' is Sigma * theta_j'.
    let prod = sigma_hat.as_matrix() * est.theta.transpose();
    Ok((0..p)
        .map(|j| {
            let col = prod.column(j);
            let mut gap = 0.0f64;
            for k in 0..p {
                let target = if k == j { 1.0 } else { 0.0 };
                gap = gap.max((col[k] - target).abs());
            }
            KktGap {
                gap,
                bound: est.lambdas[j] / est.tau_sq[j],
                diagonal_error: (col[j] - 1.0).abs(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_panel(seed: u64, n: usize, p: usize) -> ReturnPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ReturnPanel::unlabeled(DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))).unwrap()
    }

    #[test]
    fn identity_gaps_are_zero() {
        let est = PrecisionEstimate {
            theta: DMatrix::identity(3, 3),
            tau_sq: DVector::from_element(3, 1.0),
            lambdas: DVector::from_element(3, 0.1),
            support_sizes: vec![0; 3],
            gamma_hat: vec![DVector::zeros(2); 3],
            labels: vec!["a".into(), "b".into(), "c".into()],
            repaired: false,
        };
        let gaps = kkt_report(&est, &SymmetricMatrix::identity(3)).unwrap();
        assert!(gaps.iter().all(|g| g.gap == 0.0 && g.diagonal_error == 0.0));
    }

    #[test]
    fn rows_match_c_over_tau() {
        let panel = gaussian_panel(1, 80, 6);
        let est = nodewise_precision(&panel).unwrap();
        let c = est.c_matrix();
        for j in 0..6 {
            assert!(est.theta[(j, j)] > 0.0);
            assert_eq!(est.theta[(j, j)], 1.0 / est.tau_sq[j]);
            for k in 0..6 {
                assert!((est.theta[(j, k)] - c[(j, k)] / est.tau_sq[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_column_fails_loudly() {
        let mut data = gaussian_panel(2, 40, 4).data().clone();
        data.column_mut(1).fill(0.25);
        let panel = ReturnPanel::new(data, vec!["w".into(), "x".into(), "y".into(), "z".into()]).unwrap();
        match nodewise_precision(&panel) {
            Err(Error::DegenerateAsset { index, label, .. }) => {
                assert_eq!(index, 1);
                assert_eq!(label, "x");
            }
            other => panic!("expected DegenerateAsset, got {other:?}"),
        }
    }

    #[test]
    fn near_duplicate_asset_hits_tau_floor() {
        // Micro-scale returns where one asset copies another up to tiny noise.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data = DMatrix::from_fn(60, 3, |_, _| 1e-7 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        for t in 0..60 {
            let noise: f64 = StandardNormal.sample(&mut rng);
            data[(t, 2)] = data[(t, 0)] + 1e-10 * noise;
        }
        let panel = ReturnPanel::unlabeled(data).unwrap();
        let centered = panel.centered();
        assert!(matches!(nodewise_row(&centered, 2), Err(Error::DegenerateAsset { index: 2, .. })));
    }

    #[test]
    fn too_few_observations_rejected() {
        let panel = gaussian_panel(4, 8, 3);
        assert!(nodewise_precision(&panel).is_err());
    }

    #[test]
    fn pd_repair_gives_symmetric_pd() {
        let panel = gaussian_panel(5, 30, 40);
        let est = nodewise_precision_with(
            &panel,
            &NodewiseConfig {
                pd_repair: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(est.repaired);
        let sym = SymmetricMatrix::from_upper(est.theta.clone()).unwrap();
        assert_eq!(sym.as_matrix(), &est.theta);
        assert!(sym.min_eigenvalue().unwrap() >= linalg::EIGEN_FLOOR - 1e-10);
    }
}
