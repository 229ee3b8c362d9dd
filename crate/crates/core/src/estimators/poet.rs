//! Principal components plus soft-thresholded residual covariance.

use nalgebra::DMatrix;

use super::{CovarianceEstimate, CovarianceMeta, Method};
use crate::error::{Error, Result};
use crate::lasso::soft_threshold;
use crate::linalg::{self, SymmetricMatrix};
use crate::panel::ReturnPanel;

/// Minimum eigenvalue the residual covariance must reach.
pub const POET_EIGEN_FLOOR: f64 = 1e-6;
/// Largest accepted condition number of the residual covariance.
pub const POET_COND_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoetConfig {
    /// Upper bound on the factor count.
    pub m_max: usize,
    pub zeta_step: f64,
    /// The search fails once the threshold constant would exceed this.
    pub max_zeta: f64,
    /// Skip the information criterion and use this factor count.
    pub fixed_k: Option<usize>,
    /// Skip the conditioning search and use this threshold constant.
    pub fixed_zeta: Option<f64>,
}

impl Default for PoetConfig {
    fn default() -> Self {
        Self {
            m_max: 7,
            zeta_step: 0.1,
            max_zeta: 10.0,
            fixed_k: None,
            fixed_zeta: None,
        }
    }
}

pub fn poet(panel: &ReturnPanel) -> Result<CovarianceEstimate> {
    poet_with(panel, &PoetConfig::default())
}

/// Bai-Ng type criterion over `k = 0..=m_max`, with the trace term scaled
/// by `1/p`. Ties keep the smaller `k`.
fn select_factor_count(eigenvalues: &[f64], n: usize, m_max: usize) -> usize {
    let p = eigenvalues.len();
    let (pf, nf) = (p as f64, n as f64);
    let penalty = (pf + nf) / (pf * nf) * (pf * nf / (pf + nf)).ln();
    let mut tail: f64 = eigenvalues.iter().sum();
    let mut best = (tail / pf, 0);
    for k in 1..=m_max.min(p) {
        tail -= eigenvalues[k - 1];
        let ic = tail / pf + k as f64 * penalty;
        if ic < best.0 {
            best = (ic, k);
        }
    }
    best.1
}

fn threshold_residual(residual: &DMatrix<f64>, zeta: f64, rate: f64) -> DMatrix<f64> {
    let p = residual.nrows();
    let mut omega = residual.clone();
    for i in 0..p {
        for j in (i + 1)..p {
            let tau = zeta * (residual[(i, i)] * residual[(j, j)]).max(0.0).sqrt() * rate;
            let v = soft_threshold(residual[(i, j)], tau);
            omega[(i, j)] = v;
            omega[(j, i)] = v;
        }
    }
    omega
}

fn well_conditioned(omega: &SymmetricMatrix) -> Result<bool> {
    let eig = linalg::eig_sym(omega)?;
    let max = eig.eigenvalues[0];
    let min = eig.eigenvalues[eig.eigenvalues.len() - 1];
    Ok(min >= POET_EIGEN_FLOOR && max / min <= POET_COND_CAP)
}

pub fn poet_with(panel: &ReturnPanel, config: &PoetConfig) -> Result<CovarianceEstimate> {
    let (n, p) = (panel.n_obs(), panel.n_assets());
    if n < 2 || p < 2 {
        return Err(Error::Invalid(format!("POET needs n >= 2 and p >= 2, got {n}x{p}")));
    }
    if !(config.zeta_step > 0.0) {
        return Err(Error::Invalid("POET threshold step must be positive".into()));
    }
    let sigma = linalg::sample_covariance(panel);
    let eig = linalg::eig_sym(&sigma)?;
    let k_hat = match config.fixed_k {
        Some(k) => k.min(p),
        None => select_factor_count(eig.eigenvalues.as_slice(), n, config.m_max),
    };

    // Leading-factor part and the spectral tail it leaves behind.
    let mut low_rank = DMatrix::zeros(p, p);
    for k in 0..k_hat {
        let v = eig.eigenvectors.column(k);
        low_rank.ger(eig.eigenvalues[k], &v, &v, 1.0);
    }
    let residual = sigma.as_matrix() - &low_rank;
    let rate = ((p as f64).ln() / n as f64).sqrt() + 1.0 / (p as f64).sqrt();

    let (omega, zeta) = match config.fixed_zeta {
        Some(zeta) => (threshold_residual(&residual, zeta, rate), zeta),
        None => {
            let mut step = 0u32;
            loop {
                let zeta = config.zeta_step * f64::from(step);
                if zeta > config.max_zeta {
                    return Err(Error::PoetConditioning {
                        max_zeta: config.max_zeta,
                    });
                }
                let omega = threshold_residual(&residual, zeta, rate);
                if well_conditioned(&SymmetricMatrix::from_upper(omega.clone())?)? {
                    break (omega, zeta);
                }
                step += 1;
            }
        }
    };

    Ok(CovarianceEstimate {
        matrix: SymmetricMatrix::from_upper(low_rank + omega)?,
        method: Method::Poet,
        meta: CovarianceMeta::Poet { k_hat, zeta },
    })
}
