//! Closed-form GMV and Markowitz portfolios from a precision matrix.
//!
//! The precision may be the non-symmetric nodewise estimate; the formulas
//! are applied verbatim and the constraint residuals are reported.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;

/// Smallest accepted `1'Theta 1` and `AD - B^2`.
pub const DENOM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortfolioKind {
    Gmv,
    Markowitz,
}

impl PortfolioKind {
    pub fn name(self) -> &'static str {
        match self {
            PortfolioKind::Gmv => "gmv",
            PortfolioKind::Markowitz => "markowitz",
        }
    }
}

impl std::str::FromStr for PortfolioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gmv" => Ok(PortfolioKind::Gmv),
            "markowitz" | "mkw" => Ok(PortfolioKind::Markowitz),
            other => Err(Error::Invalid(format!("unknown portfolio {other:?}"))),
        }
    }
}

/// `A = 1'Theta 1`, `B = 1'Theta mu`, `D = mu'Theta mu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Abd {
    pub a: f64,
    pub b: f64,
    pub d: f64,
}

impl Abd {
    pub fn new(theta: &DMatrix<f64>, mu: &DVector<f64>) -> Self {
        let ones = DVector::from_element(mu.len(), 1.0);
        let theta_mu = theta * mu;
        Self {
            a: ones.dot(&(theta * &ones)),
            b: ones.dot(&theta_mu),
            d: mu.dot(&theta_mu),
        }
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.d - self.b * self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioWeights {
    pub weights: DVector<f64>,
    pub kind: PortfolioKind,
    /// Per-period return target for Markowitz portfolios.
    pub target: Option<f64>,
    pub abd: Option<Abd>,
    /// `sum(w) - 1`.
    pub budget_residual: f64,
    /// `w'mu - target`, Markowitz only.
    pub return_residual: Option<f64>,
}

impl PortfolioWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PortfolioVariance {
    pub value: f64,
}

fn check_square(theta: &DMatrix<f64>, p: Option<usize>) -> Result<()> {
    let want = p.unwrap_or(theta.nrows());
    if theta.nrows() != want || theta.ncols() != want {
        return Err(Error::Dimension {
            expected: format!("{want}x{want} precision"),
            got: format!("{}x{}", theta.nrows(), theta.ncols()),
        });
    }
    Ok(())
}

fn gmv_denominator(theta: &DMatrix<f64>) -> Result<f64> {
    check_square(theta, None)?;
    let ones = DVector::from_element(theta.nrows(), 1.0);
    let a = ones.dot(&(theta * &ones));
    if !(a > DENOM_FLOOR) {
        return Err(Error::Portfolio(format!(
            "1'Theta 1 = {a:e} is not above {DENOM_FLOOR:e}; the precision estimate is unusable"
        )));
    }
    Ok(a)
}

/// `Theta 1 / (1'Theta 1)`.
pub fn gmv_weights(theta: &DMatrix<f64>) -> Result<PortfolioWeights> {
    let a = gmv_denominator(theta)?;
    let ones = DVector::from_element(theta.nrows(), 1.0);
    let weights = theta * ones / a;
    Ok(PortfolioWeights {
        budget_residual: weights.sum() - 1.0,
        weights,
        kind: PortfolioKind::Gmv,
        target: None,
        abd: None,
        return_residual: None,
    })
}

/// `1 / (1'Theta 1)`, computed directly rather than through the weights.
pub fn gmv_variance(theta: &DMatrix<f64>) -> Result<PortfolioVariance> {
    Ok(PortfolioVariance {
        value: 1.0 / gmv_denominator(theta)?,
    })
}

fn markowitz_abd(theta: &DMatrix<f64>, mu: &DVector<f64>, rho1: f64) -> Result<Abd> {
    check_square(theta, Some(mu.len()))?;
    if !rho1.is_finite() || mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Markowitz inputs"));
    }
    let abd = Abd::new(theta, mu);
    let det = abd.determinant();
    if !(det > DENOM_FLOOR) {
        let why = if det < 0.0 {
            "Theta is indefinite on the span of the unit vector and the mean returns"
        } else {
            "mean returns are nearly collinear with the unit vector under Theta"
        };
        return Err(Error::Portfolio(format!("AD - B^2 = {det:e} is not above {DENOM_FLOOR:e}; {why}")));
    }
    Ok(abd)
}

/// Lagrangian solution under full investment and a return target `rho1`.
pub fn markowitz_weights(
    theta: &DMatrix<f64>,
    mu: &DVector<f64>,
    rho1: f64,
) -> Result<PortfolioWeights> {
    let abd = markowitz_abd(theta, mu, rho1)?;
    let det = abd.determinant();
    let ones = DVector::from_element(mu.len(), 1.0);
    let weights = theta * ones * ((abd.d - rho1 * abd.b) / det)
        + theta * mu * ((rho1 * abd.a - abd.b) / det);
    Ok(PortfolioWeights {
        budget_residual: weights.sum() - 1.0,
        return_residual: Some(weights.dot(mu) - rho1),
        weights,
        kind: PortfolioKind::Markowitz,
        target: Some(rho1),
        abd: Some(abd),
    })
}

/// `(A rho1^2 - 2 B rho1 + D) / (AD - B^2)`.
pub fn markowitz_variance(
    theta: &DMatrix<f64>,
    mu: &DVector<f64>,
    rho1: f64,
) -> Result<PortfolioVariance> {
    let abd = markowitz_abd(theta, mu, rho1)?;
    Ok(PortfolioVariance {
        value: (abd.a * rho1 * rho1 - 2.0 * abd.b * rho1 + abd.d) / abd.determinant(),
    })
}

/// `||w||_1`.
pub fn gross_exposure(w: &PortfolioWeights) -> f64 {
    w.weights.iter().map(|v| v.abs()).sum()
}

/// `|w'(Sigma_hat - Sigma) w|`.
pub fn risk_error(
    w: &PortfolioWeights,
    sigma_hat: &SymmetricMatrix,
    sigma_true: &SymmetricMatrix,
) -> Result<f64> {
    let p = w.len();
    if sigma_hat.dim() != p || sigma_true.dim() != p {
        return Err(Error::Dimension {
            expected: format!("{p}x{p} covariances"),
            got: format!("{} and {}", sigma_hat.dim(), sigma_true.dim()),
        });
    }
    let diff = sigma_hat.as_matrix() - sigma_true.as_matrix();
    Ok(w.weights.dot(&(diff * &w.weights)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn gmv_examples() {
        let w = gmv_weights(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(w.weights.as_slice(), &[0.25; 4]);
        let w = gmv_weights(&diag(&[2.0, 1.0])).unwrap();
        assert!((w.weights[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.weights[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(gmv_variance(&DMatrix::identity(10, 10)).unwrap().value, 0.1);
        assert_eq!(gmv_variance(&diag(&[2.0, 2.0])).unwrap().value, 0.25);
    }

    #[test]
    fn gmv_rejects_broken_precision() {
        let theta = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert!(matches!(gmv_weights(&theta), Err(Error::Portfolio(_))));
        assert!(gmv_variance(&theta).is_err());
    }

    #[test]
    fn markowitz_examples() {
        let mu = DVector::from_vec(vec![0.1, 0.1]);
        // mu parallel to 1 makes AD - B^2 vanish.
        assert!(markowitz_weights(&DMatrix::identity(2, 2), &mu, 0.1).is_err());

        let mu = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let w = markowitz_weights(&DMatrix::identity(3, 3), &mu, 0.2).unwrap();
        for v in w.weights.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }

        let mu = DVector::from_vec(vec![0.0, 0.2]);
        let abd = Abd::new(&DMatrix::identity(2, 2), &mu);
        assert_eq!((abd.a, abd.b), (2.0, 0.2));
        assert!((abd.d - 0.04).abs() < 1e-15);
        let v = markowitz_variance(&DMatrix::identity(2, 2), &mu, 0.1).unwrap();
        assert!((v.value - 0.5).abs() < 1e-12);

        // A target of 0.1 forces the perturbed asset out: variance 1/3.
        let mu = DVector::from_vec(vec![0.1, 0.1, 0.1, 0.1 + 1e-6]);
        let v = markowitz_variance(&DMatrix::identity(4, 4), &mu, 0.1).unwrap();
        assert!((v.value - 1.0 / 3.0).abs() < 1e-3);
        // Targeting the GMV mean recovers the GMV variance 1/p.
        // AD - B^2 = 3e-12 here, so cancellation limits the accuracy.
        let v = markowitz_variance(&DMatrix::identity(4, 4), &mu, 0.1 + 0.25e-6).unwrap();
        assert!((v.value - 0.25).abs() < 1e-4);
        let mu = DVector::from_vec(vec![0.1, 0.1, 0.1, 0.1 + 1e-3]);
        let v = markowitz_variance(&DMatrix::identity(4, 4), &mu, 0.1 + 0.25e-3).unwrap();
        assert!((v.value - 0.25).abs() < 1e-9);
    }

    #[test]
    fn exposure_and_risk_error() {
        let mk = |w: &[f64]| PortfolioWeights {
            weights: DVector::from_column_slice(w),
            kind: PortfolioKind::Gmv,
            target: None,
            abd: None,
            budget_residual: 0.0,
            return_residual: None,
        };
        assert_eq!(gross_exposure(&mk(&[0.5, 0.5])), 1.0);
        assert_eq!(gross_exposure(&mk(&[1.5, -0.5])), 2.0);

        let s = SymmetricMatrix::from_diagonal(&[0.3, 0.2]).unwrap();
        assert_eq!(risk_error(&mk(&[0.4, 0.6]), &s, &s).unwrap(), 0.0);
        let s_hat = SymmetricMatrix::from_diagonal(&[0.31, 0.2]).unwrap();
        assert!((risk_error(&mk(&[1.0, 0.0]), &s_hat, &s).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn nonsymmetric_theta_reports_return_residual() {
        let theta = DMatrix::from_row_slice(3, 3, &[2.0, -0.3, 0.0, -0.1, 1.5, -0.2, 0.0, -0.4, 1.0]);
        let mu = DVector::from_vec(vec![0.01, 0.02, -0.005]);
        let w = markowitz_weights(&theta, &mu, 0.01).unwrap();
        assert!(w.budget_residual.abs() < 1e-12);
        assert!(w.return_residual.unwrap().abs() > 1e-6);
    }
}
