//! Large-portfolio estimation when assets can outnumber observations.
//!
//! The central estimator is the nodewise-regression relaxed inverse of the
//! return covariance ([`nodewise`]). Ledoit-Wolf shrinkage and POET are
//! provided as baselines ([`estimators`]), together with closed-form GMV and
//! Markowitz portfolios ([`portfolio`]), a seeded Monte-Carlo harness
//! ([`simulation`]) and a rolling-window backtester ([`backtest`]).

pub mod backtest;
pub mod error;
pub mod estimators;
pub mod io;
pub mod lasso;
pub mod linalg;
pub mod nodewise;
pub mod panel;
pub mod portfolio;
pub mod simulation;

pub use error::{Error, Result};
pub use estimators::{CovarianceEstimate, CovarianceMeta, EstimatorKind, Method};
pub use lasso::LassoFit;
pub use linalg::{EigenDecomposition, SymmetricMatrix};
pub use nodewise::{NodewiseConfig, PrecisionEstimate};
pub use panel::{Period, ReturnPanel};
pub use portfolio::{PortfolioKind, PortfolioVariance, PortfolioWeights};
