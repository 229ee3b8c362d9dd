use nalgebra::DMatrix;

use super::{CovarianceEstimate, CovarianceMeta, Method};
use crate::error::{Error, Result};
use crate::linalg::{self, SymmetricMatrix};
use crate::panel::ReturnPanel;

/// Linear shrinkage of the sample covariance toward `m I`, `m = trace(S)/p`,
/// with the plug-in intensity `min(b_bar^2, d^2) / d^2`.
pub fn ledoit_wolf(panel: &ReturnPanel) -> Result<CovarianceEstimate> {
    let (n, p) = (panel.n_obs(), panel.n_assets());
    if n < 2 {
        return Err(Error::Invalid("Ledoit-Wolf needs at least 2 observations".into()));
    }
    let x = panel.centered();
    let s = linalg::covariance_of_centered(&x);
    let sm = s.as_matrix();
    let pf = p as f64;

    let m = sm.trace() / pf;
    let d2 = (sm - DMatrix::identity(p, p) * m).norm_squared() / pf;
    if d2 == 0.0 {
        return Ok(CovarianceEstimate {
            matrix: s,
            method: Method::LedoitWolf,
            meta: CovarianceMeta::LedoitWolf {
                shrinkage: 0.0,
                target_scale: m,
            },
        });
    }

    // ||x x' - S||_F^2 = (x'x)^2 - 2 x'Sx + ||S||_F^2
    let s_norm2 = sm.norm_squared();
    let mut acc = 0.0;
    for t in 0..n {
        let row = x.row(t).transpose();
        let xx = row.dot(&row);
        acc += xx * xx - 2.0 * row.dot(&(sm * &row)) + s_norm2;
    }
    let b_bar2 = acc / ((n * n) as f64 * pf);
    let b2 = b_bar2.min(d2);
    let rho = (b2 / d2).clamp(0.0, 1.0);

    let shrunk = sm * (1.0 - rho) + DMatrix::identity(p, p) * (rho * m);
    Ok(CovarianceEstimate {
        matrix: SymmetricMatrix::from_upper(shrunk)?,
        method: Method::LedoitWolf,
        meta: CovarianceMeta::LedoitWolf {
            shrinkage: rho,
            target_scale: m,
        },
    })
}
