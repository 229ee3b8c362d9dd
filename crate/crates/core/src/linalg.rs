//! Dense symmetric linear algebra shared by every estimator.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::panel::ReturnPanel;

/// Default eigenvalue floor for [`eigen_clean`].
pub const EIGEN_FLOOR: f64 = 1e-6;
/// Smallest eigenvalue accepted by [`invert_pd`].
pub const PD_FLOOR: f64 = 1e-10;
/// Largest tolerated `max |m * inv - I|` after inversion.
pub const INVERSE_TOL: f64 = 1e-8;

const EIGEN_MAX_ITER: usize = 100_000;

/// A finite symmetric matrix. The upper triangle is authoritative: the lower
/// triangle is always an exact copy of it.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Copies the upper triangle of `m` onto its lower triangle.
    pub fn from_upper(mut m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension {
                expected: "square matrix".into(),
                got: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("symmetric matrix"));
        }
        let p = m.nrows();
        for j in 0..p {
            for i in (j + 1)..p {
                m[(i, j)] = m[(j, i)];
            }
        }
        Ok(Self(m))
    }

    pub fn identity(p: usize) -> Self {
        Self(DMatrix::identity(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::from_upper(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// `x' M x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.0 * x))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(eig_sym(self)?.eigenvalues[self.dim() - 1])
    }
}

/// Spectral decomposition with eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns, aligned with `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    /// `V diag(values) V'` for a replacement spectrum.
    pub fn reconstruct_with(&self, values: &DVector<f64>) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= values[j];
        }
        scaled * self.eigenvectors.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_with(&self.eigenvalues)
    }
}

/// Column means of the panel.
pub fn sample_mean(panel: &ReturnPanel) -> DVector<f64> {
    let n = panel.n_obs() as f64;
    panel.data().row_sum().transpose() / n
}

/// Sample covariance with divisor `n`.
pub fn sample_covariance(panel: &ReturnPanel) -> SymmetricMatrix {
    covariance_of_centered(&panel.centered())
}

/// `X'X / n` for a matrix whose columns are already demeaned.
pub fn covariance_of_centered(centered: &DMatrix<f64>) -> SymmetricMatrix {
    let n = centered.nrows() as f64;
    let gram = centered.tr_mul(centered) / n;
    SymmetricMatrix::from_upper(gram).expect("finite panel gives a finite covariance")
}

pub fn eig_sym(m: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let p = m.dim();
    let eig = SymmetricEigen::try_new(m.as_matrix().clone(), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or(Error::EigenNoConvergence { dim: p })?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = DVector::from_iterator(p, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut eigenvectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Replaces every eigenvalue below `floor` with the smallest eigenvalue at or
/// above `floor` (or `floor` itself when none qualifies) and rebuilds.
pub fn eigen_clean(m: &SymmetricMatrix, floor: f64) -> Result<SymmetricMatrix> {
    let eig = eig_sym(m)?;
    let replacement = eig
        .eigenvalues
        .iter()
        .copied()
        .filter(|&v| v >= floor)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
        .unwrap_or(floor);
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        return Ok(m.clone());
    }
    let cleaned = eig
        .eigenvalues
        .map(|v| if v < floor { replacement } else { v });
    SymmetricMatrix::from_upper(eig.reconstruct_with(&cleaned))
}

/// Inverse of a symmetric positive definite matrix.
pub fn invert_pd(m: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let min_eig = m.min_eigenvalue()?;
    if min_eig <= PD_FLOOR {
        return Err(Error::NotPositiveDefinite {
            eigenvalue: min_eig,
            floor: PD_FLOOR,
        });
    }
    let inv = match m.as_matrix().clone().cholesky() {
        Some(chol) => chol.inverse(),
        None => {
            let eig = eig_sym(m)?;
            eig.reconstruct_with(&eig.eigenvalues.map(|v| 1.0 / v))
        }
    };
    let inv = SymmetricMatrix::from_upper(inv)?;
    let residual = identity_residual(m.as_matrix(), inv.as_matrix());
    if residual > INVERSE_TOL {
        return Err(Error::InverseResidual {
            residual,
            tolerance: INVERSE_TOL,
        });
    }
    Ok(inv)
}

/// `max |a b - I|` over all entries.
pub fn identity_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let prod = a * b;
    let mut worst = 0.0f64;
    for i in 0..prod.nrows() {
        for j in 0..prod.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - target).abs());
        }
    }
    worst
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_symmetric(rng: &mut ChaCha8Rng, p: usize) -> SymmetricMatrix {
        SymmetricMatrix::from_upper(random_matrix(rng, p, p)).unwrap()
    }

    fn random_pd(rng: &mut ChaCha8Rng, p: usize) -> SymmetricMatrix {
        let a = random_matrix(rng, p, p);
        SymmetricMatrix::from_upper(&a * a.transpose() + DMatrix::identity(p, p) * 0.5).unwrap()
    }

    #[test]
    fn from_upper_copies_upper_triangle() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 99.0, 3.0]);
        let s = SymmetricMatrix::from_upper(m).unwrap();
        assert_eq!(s.get(1, 0), 2.0);
        assert_eq!(s.get(0, 1), 2.0);
    }

    #[test]
    fn mean_examples() {
        let panel = ReturnPanel::unlabeled(DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0])).unwrap();
        assert_eq!(sample_mean(&panel).as_slice(), &[2.0, 2.0]);

        let panel = ReturnPanel::unlabeled(DMatrix::from_row_slice(3, 2, &[0.7, 1.0, 0.7, 2.0, 0.7, 3.0])).unwrap();
        assert!((sample_mean(&panel)[0] - 0.7).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let panel = ReturnPanel::unlabeled(random_matrix(&mut rng, 10, 3)).unwrap();
        let mean = sample_mean(&panel);
        for j in 0..3 {
            let mut s = 0.0;
            for t in 0..10 {
                s += panel.data()[(t, j)];
            }
            assert!((mean[j] - s / 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn covariance_examples() {
        let rows = DMatrix::from_row_slice(3, 2, &[0.5, -1.0, 0.5, -1.0, 0.5, -1.0]);
        let s = sample_covariance(&ReturnPanel::unlabeled(rows).unwrap());
        assert_eq!(max_abs(s.as_matrix()), 0.0);

        let two = DMatrix::from_row_slice(2, 2, &[0.0, 5.0, 2.0, 5.0]);
        let s = sample_covariance(&ReturnPanel::unlabeled(two).unwrap());
        assert!((s.get(0, 0) - 1.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = random_matrix(&mut rng, 20, 4);
        let s = sample_covariance(&ReturnPanel::unlabeled(data.clone()).unwrap());
        let means: Vec<f64> = (0..4).map(|j| data.column(j).sum() / 20.0).collect();
        for a in 0..4 {
            for b in 0..4 {
                let mut acc = 0.0;
                for t in 0..20 {
                    acc += (data[(t, a)] - means[a]) * (data[(t, b)] - means[b]);
                }
                assert!((s.get(a, b) - acc / 20.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eig_examples() {
        let eig = eig_sym(&SymmetricMatrix::identity(3)).unwrap();
        assert!(eig.eigenvalues.iter().all(|v| (v - 1.0).abs() < 1e-14));

        let eig = eig_sym(&SymmetricMatrix::from_diagonal(&[1.0, 3.0]).unwrap()).unwrap();
        assert_eq!(eig.eigenvalues.as_slice(), &[3.0, 1.0]);
        assert!((eig.eigenvectors[(1, 0)].abs() - 1.0).abs() < 1e-14);
        assert!(eig.eigenvectors[(0, 0)].abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_symmetric(&mut rng, 6);
        let eig = eig_sym(&m).unwrap();
        let rel = (eig.reconstruct() - m.as_matrix()).norm() / m.as_matrix().norm();
        assert!(rel < 1e-8);
        let gram = eig.eigenvectors.tr_mul(&eig.eigenvectors);
        assert!(identity_residual(&gram, &DMatrix::identity(6, 6)) < 1e-8);
        for w in eig.eigenvalues.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn eigen_clean_examples() {
        // Rotate diag(2, 1e-9, -0.5) so the cleaning has real work to do.
        let q = DMatrix::from_row_slice(3, 3, &[
            1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0,
            1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0,
            0.0, 0.0, 1.0,
        ]);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1e-9, -0.5]));
        let m = SymmetricMatrix::from_upper(&q * d * q.transpose()).unwrap();
        let cleaned = eigen_clean(&m, EIGEN_FLOOR).unwrap();
        let eig = eig_sym(&cleaned).unwrap();
        assert!(eig.eigenvalues.iter().all(|v| (v - 2.0).abs() < 1e-10));

        let pd = SymmetricMatrix::from_diagonal(&[0.3, 1.0, 4.0]).unwrap();
        let out = eigen_clean(&pd, EIGEN_FLOOR).unwrap();
        assert!(max_abs(&(out.as_matrix() - pd.as_matrix())) < 1e-10);

        let all_negative = SymmetricMatrix::from_diagonal(&[-1.0, -2.0]).unwrap();
        let out = eigen_clean(&all_negative, EIGEN_FLOOR).unwrap();
        assert!((out.min_eigenvalue().unwrap() - EIGEN_FLOOR).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_symmetric(&mut rng, 8);
        assert!(m.min_eigenvalue().unwrap() < 0.0);
        let out = eigen_clean(&m, EIGEN_FLOOR).unwrap();
        assert!(out.min_eigenvalue().unwrap() >= EIGEN_FLOOR - 1e-10);
    }

    #[test]
    fn invert_examples() {
        let inv = invert_pd(&SymmetricMatrix::identity(4)).unwrap();
        assert_eq!(inv.as_matrix(), &DMatrix::identity(4, 4));

        let inv = invert_pd(&SymmetricMatrix::from_diagonal(&[2.0, 4.0]).unwrap()).unwrap();
        assert!((inv.get(0, 0) - 0.5).abs() < 1e-15 && (inv.get(1, 1) - 0.25).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_pd(&mut rng, 5);
        let inv = invert_pd(&m).unwrap();
        assert!(identity_residual(m.as_matrix(), inv.as_matrix()) <= 1e-8);

        let bad = SymmetricMatrix::from_diagonal(&[1.0, -0.25]).unwrap();
        match invert_pd(&bad) {
            Err(Error::NotPositiveDefinite { eigenvalue, .. }) => assert_eq!(eigenvalue, -0.25),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn covariance_row_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = random_matrix(&mut rng, 15, 4);
        let mut rows: Vec<usize> = (0..15).collect();
        rows.reverse();
        rows.swap(2, 9);
        let permuted = DMatrix::from_fn(15, 4, |i, j| data[(rows[i], j)]);
        let a = sample_covariance(&ReturnPanel::unlabeled(data).unwrap());
        let b = sample_covariance(&ReturnPanel::unlabeled(permuted).unwrap());
        assert!(max_abs(&(a.as_matrix() - b.as_matrix())) < 1e-14);
    }

    #[test]
    fn eigen_clean_idempotent_and_double_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let m = random_symmetric(&mut rng, 7);
            let once = eigen_clean(&m, EIGEN_FLOOR).unwrap();
            let twice = eigen_clean(&once, EIGEN_FLOOR).unwrap();
            assert!(max_abs(&(once.as_matrix() - twice.as_matrix())) < 1e-10);

            let pd = random_pd(&mut rng, 6);
            let back = invert_pd(&invert_pd(&pd).unwrap()).unwrap();
            let rel = (back.as_matrix() - pd.as_matrix()).norm() / pd.as_matrix().norm();
            assert!(rel < 1e-6);
        }
    }
}
