//! Baseline covariance estimators and the common precision dispatch.

mod ledoit_wolf;
mod poet;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

pub use ledoit_wolf::ledoit_wolf;
pub use poet::{poet, poet_with, PoetConfig, POET_COND_CAP, POET_EIGEN_FLOOR};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::linalg::{self, SymmetricMatrix};
use crate::nodewise::{self, NodewiseConfig};
use crate::panel::ReturnPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sample,
    LedoitWolf,
    Poet,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sample => "sample",
            Method::LedoitWolf => "ledoit_wolf",
            Method::Poet => "poet",
        }
    }
}

/// Method-specific tuning that produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceMeta {
    Sample,
    LedoitWolf {
        /// Shrinkage intensity in `[0, 1]`.
        shrinkage: f64,
        /// Target scale `trace(S) / p`.
        target_scale: f64,
    },
    Poet {
        k_hat: usize,
        zeta: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: SymmetricMatrix,
    pub method: Method,
    pub meta: CovarianceMeta,
}

impl CovarianceEstimate {
    pub fn sample(panel: &ReturnPanel) -> Self {
        Self {
            matrix: linalg::sample_covariance(panel),
            method: Method::Sample,
            meta: CovarianceMeta::Sample,
        }
    }

    /// One-line `key=value` summary of the tuning record.
    pub fn describe(&self) -> String {
        match self.meta {
            CovarianceMeta::Sample => "method=sample".to_string(),
            CovarianceMeta::LedoitWolf {
                shrinkage,
                target_scale,
            } => format!(
                "method=ledoit_wolf,shrinkage={},target_scale={}",
                fmt_f64(shrinkage),
                fmt_f64(target_scale)
            ),
            CovarianceMeta::Poet { k_hat, zeta } => format!("method=poet,k_hat={k_hat},zeta={}", fmt_f64(zeta)),
        }
    }
}

/// Precision matrix of a positive definite covariance estimate.
pub fn to_precision(est: &CovarianceEstimate) -> Result<SymmetricMatrix> {
    linalg::invert_pd(&est.matrix).map_err(|e| match e {
        Error::NotPositiveDefinite { eigenvalue, .. } => Error::EstimatorNotPd {
            method: est.method.name(),
            min_eigenvalue: eigenvalue,
        },
        other => other,
    })
}

/// Every precision source the portfolio layer can consume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Nodewise,
    LedoitWolf,
    Poet,
    Sample,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Nodewise => "nodewise",
            EstimatorKind::LedoitWolf => "ledoit_wolf",
            EstimatorKind::Poet => "poet",
            EstimatorKind::Sample => "sample",
        }
    }

    /// Precision estimate from the panel. For nodewise this is the relaxed
    /// inverse and need not be symmetric.
    pub fn precision(self, panel: &ReturnPanel) -> Result<DMatrix<f64>> {
        match self {
            EstimatorKind::Nodewise => {
                Ok(nodewise::nodewise_precision_with(panel, &NodewiseConfig::default())?.theta)
            }
            EstimatorKind::LedoitWolf => Ok(to_precision(&ledoit_wolf(panel)?)?.into_inner()),
            EstimatorKind::Poet => Ok(to_precision(&poet(panel)?)?.into_inner()),
            EstimatorKind::Sample => {
                Ok(to_precision(&CovarianceEstimate::sample(panel))?.into_inner())
            }
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "nodewise" => Ok(EstimatorKind::Nodewise),
            "ledoit_wolf" | "lw" => Ok(EstimatorKind::LedoitWolf),
            "poet" => Ok(EstimatorKind::Poet),
            "sample" => Ok(EstimatorKind::Sample),
            other => Err(Error::Invalid(format!("unknown estimator {other:?}"))),
        }
    }
}
