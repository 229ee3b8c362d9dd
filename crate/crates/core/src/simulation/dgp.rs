//! Data generating processes with known population moments.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, ChiSquared, Distribution, Gamma, Normal, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::linalg::{self, SymmetricMatrix};
use crate::panel::ReturnPanel;
use crate::portfolio::{self, PortfolioVariance, PortfolioWeights};

/// Daily Markowitz target, 10% a year over 252 days.
pub const DAILY_TARGET: f64 = 0.000378;
/// Monthly Markowitz target.
pub const MONTHLY_TARGET: f64 = 0.007974;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DgpKind {
    /// Three Gaussian factors with Gaussian loadings.
    Factor3,
    RandomCovGaussian,
    /// Multivariate t with the covariance (not the scale) set to the target.
    RandomCovT,
    SparseCholesky,
    /// AR(1) correlation `rho^|i-j|`; its inverse is tridiagonal.
    Toeplitz,
}

impl DgpKind {
    pub fn name(self) -> &'static str {
        match self {
            DgpKind::Factor3 => "factor3",
            DgpKind::RandomCovGaussian => "random_cov_gaussian",
            DgpKind::RandomCovT => "random_cov_t9",
            DgpKind::SparseCholesky => "sparse_cholesky",
            DgpKind::Toeplitz => "toeplitz",
        }
    }
}

impl std::str::FromStr for DgpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "factor3" | "factor" => Ok(DgpKind::Factor3),
            "random_cov_gaussian" => Ok(DgpKind::RandomCovGaussian),
            "random_cov_t9" | "random_cov_t" => Ok(DgpKind::RandomCovT),
            "sparse_cholesky" => Ok(DgpKind::SparseCholesky),
            "toeplitz" => Ok(DgpKind::Toeplitz),
            other => Err(Error::Invalid(format!("unknown DGP {other:?}"))),
        }
    }
}

/// Factor-model moments. Synthetic defaults, not a calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorParams {
    pub factor_mean: [f64; 3],
    pub factor_var: [f64; 3],
    pub loading_mean: f64,
    pub loading_sd: f64,
}

impl Default for FactorParams {
    fn default() -> Self {
        Self {
            factor_mean: [0.0004, 0.0002, 0.0001],
            factor_var: [0.25; 3],
            loading_mean: 1.0,
            loading_sd: 0.5,
        }
    }
}

/// Parameters shared by the generators. Defaults are synthetic stand-ins
/// for moments that would otherwise be fitted to market data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpParams {
    /// Asset means are drawn from `N(mean_mu, mean_sd^2)`.
    pub mean_mu: f64,
    pub mean_sd: f64,
    /// Error standard deviations are drawn from `Gamma(shape, rate)`.
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    /// Standard deviation of random off-diagonal covariances.
    pub offdiag_sd: f64,
    pub t_dof: f64,
    /// Probability that a below-diagonal Cholesky entry is nonzero.
    pub fill_probability: f64,
    /// Nonzero Cholesky entries are uniform on `[-fill_range, fill_range]`.
    pub fill_range: f64,
    pub toeplitz_rho: f64,
    pub factor: FactorParams,
}

impl Default for DgpParams {
    fn default() -> Self {
        Self {
            mean_mu: 0.0004,
            mean_sd: 0.01,
            gamma_shape: 2.0,
            gamma_rate: 50.0,
            offdiag_sd: 1e-4,
            t_dof: 9.0,
            fill_probability: 0.2,
            fill_range: 0.1,
            toeplitz_rho: 0.5,
            factor: FactorParams::default(),
        }
    }
}

impl DgpParams {
    /// `key=value` pairs, for embedding into study outputs.
    pub fn record(&self) -> Vec<(&'static str, String)> {
        let f = &self.factor;
        vec![
            ("mean_mu", self.mean_mu.to_string()),
            ("mean_sd", self.mean_sd.to_string()),
            ("gamma_shape", self.gamma_shape.to_string()),
            ("gamma_rate", self.gamma_rate.to_string()),
            ("offdiag_sd", self.offdiag_sd.to_string()),
            ("t_dof", self.t_dof.to_string()),
            ("fill_probability", self.fill_probability.to_string()),
            ("fill_range", self.fill_range.to_string()),
            ("toeplitz_rho", self.toeplitz_rho.to_string()),
            ("factor_mean", format!("{:?}", f.factor_mean)),
            ("factor_var", format!("{:?}", f.factor_var)),
            ("loading_mean", f.loading_mean.to_string()),
            ("loading_sd", f.loading_sd.to_string()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub p: usize,
    pub n: usize,
    /// Markowitz target used for the true portfolio.
    pub rho1: f64,
    pub params: DgpParams,
}

impl DgpSpec {
    pub fn new(kind: DgpKind, p: usize, n: usize) -> Self {
        Self {
            kind,
            p,
            n,
            rho1: DAILY_TARGET,
            params: DgpParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pr = &self.params;
        let bad = |msg: &str| Err(Error::Invalid(format!("DGP {}: {msg}", self.kind.name())));
        if self.n < 2 || self.p < 2 {
            return bad("n and p must be at least 2");
        }
        if !(0.0..=1.0).contains(&pr.fill_probability) {
            return bad("fill probability must lie in [0, 1]");
        }
        if !(pr.gamma_shape > 0.0 && pr.gamma_rate > 0.0) {
            return bad("Gamma parameters must be positive");
        }
        if !(pr.t_dof > 2.0) {
            return bad("t degrees of freedom must exceed 2");
        }
        if !(pr.mean_sd >= 0.0 && pr.offdiag_sd >= 0.0 && pr.fill_range >= 0.0) {
            return bad("scale parameters must be non-negative");
        }
        if !(pr.toeplitz_rho.abs() < 1.0) {
            return bad("Toeplitz correlation must lie in (-1, 1)");
        }
        let f = &pr.factor;
        if f.factor_var.iter().any(|v| !(*v >= 0.0)) || !(f.loading_sd >= 0.0) {
            return bad("factor variances and loading sd must be non-negative");
        }
        if !self.rho1.is_finite() {
            return bad("return target must be finite");
        }
        Ok(())
    }
}

/// Population moments and the portfolios they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthBundle {
    pub sigma_true: SymmetricMatrix,
    pub theta_true: SymmetricMatrix,
    pub mu_true: DVector<f64>,
    pub w_true_gmv: PortfolioWeights,
    pub w_true_mkw: PortfolioWeights,
    pub phi_true: PortfolioVariance,
    pub psi_true: PortfolioVariance,
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("validated scale")
}

fn draw_means(rng: &mut ChaCha8Rng, p: usize, pr: &DgpParams) -> DVector<f64> {
    let dist = normal(pr.mean_mu, pr.mean_sd);
    DVector::from_fn(p, |_, _| dist.sample(rng))
}

fn draw_error_sds(rng: &mut ChaCha8Rng, p: usize, pr: &DgpParams) -> Vec<f64> {
    let dist = Gamma::new(pr.gamma_shape, 1.0 / pr.gamma_rate).expect("validated Gamma");
    (0..p).map(|_| dist.sample(rng)).collect()
}

fn standard_normals(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    // Fill row by row so the draw order does not depend on storage layout.
    let mut m = DMatrix::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// Rows `mu' + z_t' L'` for standard normal `z_t`.
fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, mu: &DVector<f64>, chol: &DMatrix<f64>) -> DMatrix<f64> {
    let z = standard_normals(rng, n, mu.len());
    let mut x = z * chol.transpose();
    for mut row in x.row_iter_mut() {
        row += mu.transpose();
    }
    x
}

fn cholesky_factor(sigma: &SymmetricMatrix) -> Result<DMatrix<f64>> {
    sigma
        .as_matrix()
        .clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite {
            eigenvalue: sigma.min_eigenvalue().unwrap_or(f64::NAN),
            floor: 0.0,
        })
}

fn truth_portfolios(
    sigma_true: SymmetricMatrix,
    theta_true: SymmetricMatrix,
    mu_true: DVector<f64>,
    rho1: f64,
) -> Result<TruthBundle> {
    let theta = theta_true.as_matrix();
    Ok(TruthBundle {
        w_true_gmv: portfolio::gmv_weights(theta)?,
        w_true_mkw: portfolio::markowitz_weights(theta, &mu_true, rho1)?,
        phi_true: portfolio::gmv_variance(theta)?,
        psi_true: portfolio::markowitz_variance(theta, &mu_true, rho1)?,
        sigma_true,
        theta_true,
        mu_true,
    })
}

/// Draws a panel and its population truth. Deterministic in `(spec, seed)`.
pub fn generate(spec: &DgpSpec, seed: u64) -> Result<(ReturnPanel, TruthBundle)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, n, pr) = (spec.p, spec.n, &spec.params);

    let (data, sigma, theta, mu) = match spec.kind {
        DgpKind::Factor3 => {
            let f = &pr.factor;
            // Factors come first so one seed shares them across every p.
            let mut factors = standard_normals(&mut rng, n, 3);
            for k in 0..3 {
                let sd = f.factor_var[k].sqrt();
                factors.column_mut(k).apply(|v| *v = f.factor_mean[k] + sd * *v);
            }
            let loading = normal(f.loading_mean, f.loading_sd);
            let b = DMatrix::from_fn(p, 3, |_, _| loading.sample(&mut rng));
            let sds = draw_error_sds(&mut rng, p, pr);
            let eps = standard_normals(&mut rng, n, p) * DMatrix::from_diagonal(&DVector::from_vec(sds.clone()));
            let data = &factors * b.transpose() + eps;

            let cov_f = DMatrix::from_diagonal(&DVector::from_column_slice(&f.factor_var));
            let idio = DMatrix::from_diagonal(&DVector::from_iterator(p, sds.iter().map(|s| s * s)));
            let sigma = SymmetricMatrix::from_upper(&b * cov_f * b.transpose() + idio)?;
            let theta = linalg::invert_pd(&sigma)?;
            let mu = &b * DVector::from_column_slice(&f.factor_mean);
            (data, sigma, theta, mu)
        }
        DgpKind::RandomCovGaussian | DgpKind::RandomCovT => {
            let mu = draw_means(&mut rng, p, pr);
            let sds = draw_error_sds(&mut rng, p, pr);
            let off = normal(0.0, pr.offdiag_sd);
            let mut raw = DMatrix::zeros(p, p);
            for i in 0..p {
                raw[(i, i)] = sds[i] * sds[i];
                for j in (i + 1)..p {
                    raw[(i, j)] = off.sample(&mut rng);
                }
            }
            let sigma = linalg::eigen_clean(&SymmetricMatrix::from_upper(raw)?, linalg::EIGEN_FLOOR)?;
            let theta = linalg::invert_pd(&sigma)?;
            let chol = cholesky_factor(&sigma)?;
            let data = if spec.kind == DgpKind::RandomCovGaussian {
                gaussian_rows(&mut rng, n, &mu, &chol)
            } else {
                let nu = pr.t_dof;
                let chi = ChiSquared::new(nu).expect("validated dof");
                let centered = gaussian_rows(&mut rng, n, &DVector::zeros(p), &chol);
                let shrink = ((nu - 2.0) / nu).sqrt();
                let mut data = centered;
                for mut row in data.row_iter_mut() {
                    let w: f64 = chi.sample(&mut rng);
                    row *= shrink / (w / nu).sqrt();
                    row += mu.transpose();
                }
                data
            };
            (data, sigma, theta, mu)
        }
        DgpKind::SparseCholesky => {
            let mu = draw_means(&mut rng, p, pr);
            let fill = Bernoulli::new(pr.fill_probability).expect("validated probability");
            let unit = Uniform::new(0.0, 1.0).expect("valid range");
            let mut l = DMatrix::zeros(p, p);
            for i in 0..p {
                l[(i, i)] = rng.sample(unit);
                for j in 0..i {
                    if fill.sample(&mut rng) {
                        l[(i, j)] = pr.fill_range * (2.0 * rng.sample(unit) - 1.0);
                    }
                }
            }
            let sigma = SymmetricMatrix::from_upper(&l * l.transpose())?;
            let l_inv = l
                .clone()
                .solve_lower_triangular(&DMatrix::identity(p, p))
                .ok_or(Error::NotPositiveDefinite { eigenvalue: 0.0, floor: 0.0 })?;
            let theta = SymmetricMatrix::from_upper(l_inv.transpose() * l_inv)?;
            let data = gaussian_rows(&mut rng, n, &mu, &l);
            (data, sigma, theta, mu)
        }
        DgpKind::Toeplitz => {
            let mu = draw_means(&mut rng, p, pr);
            let rho = pr.toeplitz_rho;
            let sigma = SymmetricMatrix::from_upper(DMatrix::from_fn(p, p, |i, j| {
                rho.powi((i as i32 - j as i32).abs())
            }))?;
            let theta = linalg::invert_pd(&sigma)?;
            let chol = cholesky_factor(&sigma)?;
            let data = gaussian_rows(&mut rng, n, &mu, &chol);
            (data, sigma, theta, mu)
        }
    };

    let truth = truth_portfolios(sigma, theta, mu, spec.rho1)?;
    let panel = ReturnPanel::unlabeled(data)?;
    Ok((panel, truth))
}
