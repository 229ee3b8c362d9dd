//! Lasso solver and modified-BIC penalty selection.
//!
//! The objective is `||y - X g||^2 / n + 2 lambda ||g||_1`. The solver works
//! on the Gram form `G = X'X / n`, `c = X'y / n`, which lets the nodewise
//! estimator reuse one sample covariance for every regression.
//!
//! Each coordinate update divides by its own `G_kk`, which is the same as
//! running on unit-norm predictors with a per-column penalty and rescaling
//! the coefficient back. The original objective (and therefore its KKT
//! conditions) is preserved exactly.
//!
//! Coordinate descent stalls on nearly collinear designs, which are common
//! at the small end of the penalty grid, so path fits use an exact
//! active-set (feature-sign) method with an updated Cholesky factor and
//! fall back to coordinate descent only when a support system is singular.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Maximum coefficient change that ends the path fits.
pub const SWEEP_TOL: f64 = 1e-7;
/// Sweep cap per fit.
pub const MAX_SWEEPS: usize = 10_000;
/// Tolerance used by the KKT checks in tests and audits.
pub const KKT_TOL: f64 = 1e-6;
/// Default grid length and `lambda_min / lambda_max`.
pub const GRID_LEN: usize = 100;
pub const GRID_RATIO: f64 = 1e-3;

const POLISH_SWEEPS: usize = 2_000;
/// Linear solves allowed to the exact active-set method per penalty.
const EXACT_SOLVES: usize = 1_000;

/// Solution of one penalized regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coefficients: DVector<f64>,
    pub lambda: f64,
    /// `||y - X g||^2 / n`.
    pub residual_ss_over_n: f64,
    /// Indices with a nonzero coefficient, ascending.
    pub support: Vec<usize>,
    pub sweeps: usize,
}

impl LassoFit {
    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|v| v.abs()).sum()
    }
}

/// Signed soft-thresholding: `sign(z) * max(|z| - tau, 0)`.
pub fn soft_threshold(z: f64, tau: f64) -> f64 {
    debug_assert!(tau >= 0.0);
    if z > tau {
        z - tau
    } else if z < -tau {
        z + tau
    } else {
        0.0
    }
}

/// Modified BIC: `log(sigma2) + s * log(n) / n * log(log(p))`.
pub fn modified_bic(sigma2: f64, support_size: usize, n: usize, p: usize) -> f64 {
    if sigma2 <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let n = n as f64;
    sigma2.ln() + support_size as f64 * n.ln() / n * (p as f64).ln().ln()
}

/// `len` geometrically spaced penalties from `lambda_max` down to
/// `ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len <= 1 {
        return vec![lambda_max];
    }
    let step = ratio.ln() / (len - 1) as f64;
    (0..len)
        .map(|i| lambda_max * (step * i as f64).exp())
        .collect()
}

/// Gram-form regression problem: `G = X'X/n`, `c = X'y/n`, `yy = y'y/n`.
#[derive(Debug, Clone)]
pub(crate) struct GramProblem {
    pub gram: DMatrix<f64>,
    pub cross: DVector<f64>,
    pub yy: f64,
}

impl GramProblem {
    pub fn from_data(y: &DVector<f64>, x: &DMatrix<f64>) -> Self {
        let n = y.len() as f64;
        Self {
            gram: x.tr_mul(x) / n,
            cross: x.tr_mul(y) / n,
            yy: y.dot(y) / n,
        }
    }

    /// `||X'y||_inf / n`, the smallest penalty giving an all-zero fit.
    pub fn lambda_max(&self) -> f64 {
        self.cross.amax()
    }

    /// `c - G b`.
    fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut g = self.cross.clone();
        for (k, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                g.axpy(-b, &self.gram.column(k), 1.0);
            }
        }
        g
    }

    /// `||y - X b||^2 / n` from Gram quantities.
    pub fn residual_ss_over_n(&self, beta: &DVector<f64>) -> f64 {
        let g = self.gradient(beta);
        (self.yy - self.cross.dot(beta) - beta.dot(&g)).max(0.0)
    }

    #[cfg(test)]
    pub fn objective(&self, beta: &DVector<f64>, lambda: f64) -> f64 {
        self.residual_ss_over_n(beta) + 2.0 * lambda * beta.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// Coordinate-descent state reused along a penalty path.
#[derive(Debug, Clone)]
pub(crate) struct Solver<'a> {
    problem: &'a GramProblem,
    beta: DVector<f64>,
    grad: DVector<f64>,
    /// Support order and factor left by the last exact solve.
    factor: Option<(Vec<usize>, ActiveFactor)>,
}

impl<'a> Solver<'a> {
    pub fn new(problem: &'a GramProblem) -> Self {
        let q = problem.cross.len();
        Self {
            problem,
            beta: DVector::zeros(q),
            grad: problem.cross.clone(),
            factor: None,
        }
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    fn update(&mut self, k: usize, lambda: f64) -> f64 {
        let gkk = self.problem.gram[(k, k)];
        if gkk <= 0.0 {
            // Zero-variance predictor: pinned at zero.
            return 0.0;
        }
        let old = self.beta[k];
        let z = self.grad[k] + gkk * old;
        let new = soft_threshold(z, lambda) / gkk;
        let delta = new - old;
        if delta != 0.0 {
            self.beta[k] = new;
            self.grad.axpy(-delta, &self.problem.gram.column(k), 1.0);
        }
        delta.abs()
    }

    fn sweep(&mut self, coords: impl Iterator<Item = usize>, lambda: f64) -> f64 {
        let mut worst = 0.0f64;
        for k in coords {
            worst = worst.max(self.update(k, lambda));
        }
        worst
    }

    /// Full sweeps alternate with active-set passes until a full sweep moves
    /// no coefficient by `tol` or more. Returns the number of sweeps run and
    /// whether the tolerance was met.
    pub fn solve(
        &mut self,
        lambda: f64,
        tol: f64,
        max_sweeps: usize,
        mut on_sweep: impl FnMut(&DVector<f64>),
    ) -> (usize, bool) {
        let q = self.beta.len();
        let mut sweeps = 0;
        while sweeps < max_sweeps {
            let change = self.sweep(0..q, lambda);
            sweeps += 1;
            on_sweep(&self.beta);
            if change < tol {
                return (sweeps, true);
            }
            let active = support_of(&self.beta);
            while sweeps < max_sweeps {
                let change = self.sweep(active.iter().copied(), lambda);
                sweeps += 1;
                on_sweep(&self.beta);
                if change < tol {
                    break;
                }
            }
        }
        (sweeps, false)
    }

    /// Exact active-set solve, warm-started from the current coefficients;
    /// coordinate descent takes over if a support system turns singular
    /// (more active columns than the data can identify).
    pub fn fit(&mut self, lambda: f64) -> usize {
        match self.exact(lambda) {
            Some(_) => 0,
            None => {
                self.factor = None;
                self.grad = self.problem.gradient(&self.beta);
                self.solve(lambda, SWEEP_TOL, MAX_SWEEPS, |_| {}).0
            }
        }
    }

    /// Finishes at machine precision so the KKT conditions hold to rounding.
    pub fn polish(&mut self, lambda: f64) -> usize {
        self.grad = self.problem.gradient(&self.beta);
        self.exact(lambda);
        let scale = 1.0 + self.beta.amax();
        let (sweeps, _) = self.solve(lambda, 1e-15 * scale, POLISH_SWEEPS, |_| {});
        self.grad = self.problem.gradient(&self.beta);
        sweeps
    }

    /// Feature-sign active-set search. On a fixed support with signs `s`
    /// the objective is quadratic with minimizer `G_AA b = c_A - lambda s`;
    /// a line search over sign crossings keeps every step a descent step,
    /// and the worst KKT violator joins the support until none is left.
    /// The Cholesky factor of `G_AA` is updated in place as the support
    /// changes. Returns the number of linear solves, or `None` (state
    /// untouched) if the support becomes singular or progress stalls.
    fn exact(&mut self, lambda: f64) -> Option<usize> {
        let gram = &self.problem.gram;
        let cross = &self.problem.cross;
        let q = self.beta.len();
        let mut beta = self.beta.clone();
        let support = support_of(&beta);
        let (mut active, mut factor) = match self.factor.take() {
            Some((order, f)) if order.len() == support.len() && order.iter().all(|&k| beta[k] != 0.0) => {
                (order, f)
            }
            _ => {
                let f = ActiveFactor::new(&DMatrix::from_fn(support.len(), support.len(), |a, b| {
                    gram[(support[a], support[b])]
                }))?;
                (support, f)
            }
        };
        let mut signs: Vec<f64> = active.iter().map(|&k| beta[k].signum()).collect();
        let mut solves = 0;
        loop {
            while !active.is_empty() {
                solves += 1;
                if solves > EXACT_SOLVES {
                    return None;
                }
                let m = active.len();
                let rhs = DVector::from_fn(m, |a, _| cross[active[a]] - lambda * signs[a]);
                let x = factor.solve(&rhs);
                if x.iter().any(|v| !v.is_finite()) {
                    return None;
                }
                let consistent = x.iter().zip(&signs).all(|(v, s)| v * s > 0.0);
                let next = if consistent {
                    x
                } else {
                    let cur = DVector::from_fn(m, |a, _| beta[active[a]]);
                    let dir = &x - &cur;
                    // Objective along cur + t dir, less the constant y'y/n.
                    let g_aa = DMatrix::from_fn(m, m, |a, b| gram[(active[a], active[b])]);
                    let g_dir = &g_aa * &dir;
                    let c_a = DVector::from_fn(m, |a, _| cross[active[a]]);
                    let (q0, q1, q2) = (
                        cur.dot(&(&g_aa * &cur)) - 2.0 * c_a.dot(&cur),
                        2.0 * cur.dot(&g_dir) - 2.0 * c_a.dot(&dir),
                        dir.dot(&g_dir),
                    );
                    let along = |t: f64, zero: Option<usize>| {
                        let l1: f64 = (0..m)
                            .filter(|a| Some(*a) != zero)
                            .map(|a| (cur[a] + t * dir[a]).abs())
                            .sum();
                        q0 + t * (q1 + t * q2) + 2.0 * lambda * l1
                    };
                    let f_cur = along(0.0, None);
                    let (mut best_t, mut best_zero, mut best_f) = (1.0, None, along(1.0, None));
                    for a in 0..m {
                        let (c, v) = (cur[a], x[a]);
                        if c == 0.0 || c * v > 0.0 {
                            continue;
                        }
                        let t = c / (c - v);
                        let f = along(t, Some(a));
                        if f < best_f {
                            (best_t, best_zero, best_f) = (t, Some(a), f);
                        }
                    }
                    if !(best_f < f_cur) {
                        return None;
                    }
                    let mut b = &cur + dir * best_t;
                    if let Some(a) = best_zero {
                        b[a] = 0.0;
                    }
                    b
                };
                for (a, &k) in active.iter().enumerate() {
                    beta[k] = next[a];
                }
                if consistent {
                    break;
                }
                for a in (0..m).rev() {
                    if next[a] == 0.0 {
                        active.remove(a);
                        signs.remove(a);
                        factor.remove(a);
                    } else {
                        signs[a] = next[a].signum();
                    }
                }
            }
            let grad = self.problem.gradient(&beta);
            let mut in_active = vec![false; q];
            for &k in &active {
                in_active[k] = true;
            }
            let mut worst: Option<(usize, f64)> = None;
            for k in 0..q {
                if !in_active[k] && beta[k] == 0.0 && gram[(k, k)] > 0.0 {
                    let g = grad[k].abs();
                    if g > worst.map_or(0.0, |w| w.1) {
                        worst = Some((k, g));
                    }
                }
            }
            match worst {
                Some((k, g)) if g > lambda * (1.0 + 1e-12) => {
                    let sign = grad[k].signum();
                    loop {
                        let col = DVector::from_fn(active.len(), |a, _| gram[(active[a], k)]);
                        if factor.push(&col, gram[(k, k)]) {
                            break;
                        }
                        // Column k lies in the span of the support. Trading
                        // beta_A for beta_k along x_k = X_A w leaves the fit
                        // unchanged and lowers the penalty until an active
                        // coefficient reaches zero; drop it and retry.
                        let w = factor.solve(&col);
                        let mut hit: Option<(usize, f64)> = None;
                        for (a, &j) in active.iter().enumerate() {
                            let rate = sign * w[a];
                            if beta[j] * rate > 0.0 {
                                let t = beta[j] / rate;
                                if hit.is_none_or(|h| t < h.1) {
                                    hit = Some((a, t));
                                }
                            }
                        }
                        let (a, t) = hit?;
                        for (b, &j) in active.iter().enumerate() {
                            beta[j] -= t * sign * w[b];
                        }
                        beta[k] += t * sign;
                        beta[active[a]] = 0.0;
                        active.remove(a);
                        signs.remove(a);
                        factor.remove(a);
                    }
                    active.push(k);
                    signs.push(sign);
                }
                _ => {
                    self.beta = beta;
                    self.grad = grad;
                    self.factor = Some((active, factor));
                    return Some(solves);
                }
            }
        }
    }

    pub fn to_fit(&self, lambda: f64, sweeps: usize) -> LassoFit {
        LassoFit {
            coefficients: self.beta.clone(),
            lambda,
            residual_ss_over_n: self.problem.residual_ss_over_n(&self.beta),
            support: support_of(&self.beta),
            sweeps,
        }
    }
}

fn support_of(beta: &DVector<f64>) -> Vec<usize> {
    (0..beta.len()).filter(|&k| beta[k] != 0.0).collect()
}

/// Lower Cholesky factor of the Gram block on the current support.
#[derive(Debug, Clone)]
struct ActiveFactor {
    l: DMatrix<f64>,
}

impl ActiveFactor {
    fn new(g: &DMatrix<f64>) -> Option<Self> {
        if g.is_empty() {
            return Some(Self { l: DMatrix::zeros(0, 0) });
        }
        g.clone().cholesky().map(|c| Self { l: c.l() })
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let z = self.l.solve_lower_triangular(rhs).expect("nonzero diagonal");
        self.l.tr_solve_lower_triangular(&z).expect("nonzero diagonal")
    }

    /// Appends a column with Gram entries `col` against the support and
    /// diagonal `diag`. Fails if the new column is numerically dependent.
    fn push(&mut self, col: &DVector<f64>, diag: f64) -> bool {
        let m = self.l.nrows();
        let row = if m == 0 {
            DVector::zeros(0)
        } else {
            self.l.solve_lower_triangular(col).expect("nonzero diagonal")
        };
        let d2 = diag - row.norm_squared();
        if !(d2 > 1e-12 * diag) {
            return false;
        }
        let mut l = DMatrix::zeros(m + 1, m + 1);
        l.view_mut((0, 0), (m, m)).copy_from(&self.l);
        l.view_mut((m, 0), (1, m)).copy_from(&row.transpose());
        l[(m, m)] = d2.sqrt();
        self.l = l;
        true
    }

    /// Drops support position `a`: the trailing block absorbs the removed
    /// column through a rank-one update.
    fn remove(&mut self, a: usize) {
        let m = self.l.nrows();
        let mut x: Vec<f64> = (a + 1..m).map(|i| self.l[(i, a)]).collect();
        let l = self.l.clone().remove_row(a).remove_column(a);
        self.l = l;
        for k in a..m - 1 {
            let lkk = self.l[(k, k)];
            let r = lkk.hypot(x[k - a]);
            let (c, s) = (r / lkk, x[k - a] / lkk);
            self.l[(k, k)] = r;
            for i in k + 1..m - 1 {
                let lik = (self.l[(i, k)] + s * x[i - a]) / c;
                x[i - a] = c * x[i - a] - s * lik;
                self.l[(i, k)] = lik;
            }
        }
    }
}

fn check_inputs(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension {
            expected: format!("{} design rows", y.len()),
            got: x.nrows().to_string(),
        });
    }
    if y.len() < 2 {
        return Err(Error::Invalid("lasso needs at least 2 observations".into()));
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lasso input"));
    }
    Ok(())
}

fn direct_residual(y: &DVector<f64>, x: &DMatrix<f64>, beta: &DVector<f64>) -> f64 {
    let r = y - x * beta;
    r.dot(&r) / y.len() as f64
}

/// Lasso fit at a fixed penalty. `y` and the columns of `x` must be centered
/// by the caller.
pub fn lasso_fit(y: &DVector<f64>, x: &DMatrix<f64>, lambda: f64) -> Result<LassoFit> {
    check_inputs(y, x)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Invalid(format!("penalty must be finite and >= 0, got {lambda}")));
    }
    let problem = GramProblem::from_data(y, x);
    let mut solver = Solver::new(&problem);
    let mut sweeps = solver.fit(lambda);
    sweeps += solver.polish(lambda);
    let mut fit = solver.to_fit(lambda, sweeps);
    fit.residual_ss_over_n = direct_residual(y, x, &fit.coefficients);
    Ok(fit)
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Invalid("penalty grid is empty".into()));
    }
    if grid.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::Invalid("penalty grid must be strictly positive".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid("penalty grid must be sorted descending".into()));
    }
    Ok(())
}

/// Sweeps the grid with warm starts and keeps the penalty with the smallest
/// modified BIC. Ties go to the larger penalty.
pub(crate) fn select_lambda_bic_gram(
    problem: &GramProblem,
    grid: &[f64],
    n: usize,
    p_total: usize,
) -> Result<(f64, LassoFit)> {
    validate_grid(grid)?;
    let mut solver = Solver::new(problem);
    let mut best: Option<(f64, f64, Solver)> = None;
    let mut sweeps_total = 0;
    for &lambda in grid {
        sweeps_total += solver.fit(lambda);
        let sigma2 = problem.residual_ss_over_n(solver.beta());
        let support = solver.beta().iter().filter(|v| **v != 0.0).count();
        let score = modified_bic(sigma2, support, n, p_total);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, lambda, solver.clone()));
        }
    }
    let (_, lambda, mut solver) = best.expect("grid is nonempty");
    sweeps_total += solver.polish(lambda);
    Ok((lambda, solver.to_fit(lambda, sweeps_total)))
}

/// Modified-BIC penalty selection over a descending, strictly positive grid.
/// `p_total` is the full asset count used in the `log(log p)` factor.
pub fn select_lambda_bic(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    grid: &[f64],
    p_total: usize,
) -> Result<(f64, LassoFit)> {
    check_inputs(y, x)?;
    let problem = GramProblem::from_data(y, x);
    let (lambda, mut fit) = select_lambda_bic_gram(&problem, grid, y.len(), p_total)?;
    fit.residual_ss_over_n = direct_residual(y, x, &fit.coefficients);
    Ok((lambda, fit))
}

/// Default modified-BIC grid for a centered regression.
pub fn default_grid(y: &DVector<f64>, x: &DMatrix<f64>) -> Vec<f64> {
    let lambda_max = (x.tr_mul(y) / y.len() as f64).amax();
    lambda_grid(lambda_max, GRID_LEN, GRID_RATIO)
}
