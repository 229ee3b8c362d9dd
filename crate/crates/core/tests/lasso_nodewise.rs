use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use relaxed_portfolio::lasso::{default_grid, select_lambda_bic};
use relaxed_portfolio::linalg::{invert_pd, sample_covariance};
use relaxed_portfolio::nodewise::{
    kkt_report, nodewise_precision, nodewise_precision_with, LambdaRule, NodewiseConfig,
};
use relaxed_portfolio::ReturnPanel;

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn centered(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in m.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    m
}

#[test]
fn pure_noise_mostly_selects_nothing() {
    let mut empty = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = centered(gaussian(&mut rng, 200, 10));
        let y = centered(gaussian(&mut rng, 200, 1)).column(0).into_owned();
        let (_, fit) = select_lambda_bic(&y, &x, &default_grid(&y, &x), 11).unwrap();
        empty += usize::from(fit.support.is_empty());
    }
    assert!(empty >= 90, "empty support in {empty}/100 replications");
}

#[test]
fn two_strong_predictors_are_kept() {
    let mut kept = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = centered(gaussian(&mut rng, 200, 20));
        let noise = gaussian(&mut rng, 200, 1).column(0) * 0.5;
        let mut y = x.column(3) - x.column(11) * 0.8 + noise;
        let mean = y.mean();
        y.add_scalar_mut(-mean);
        let (_, fit) = select_lambda_bic(&y, &x, &default_grid(&y, &x), 21).unwrap();
        kept += usize::from(fit.support.contains(&3) && fit.support.contains(&11));
    }
    assert!(kept >= 90, "both predictors kept in {kept}/100 replications");
}

#[test]
fn orthogonal_pair_gives_diagonal_inverse_variances() {
    // Two Walsh patterns: centered and exactly uncorrelated, so no row can
    // select anything and Theta_jj = 1 / sigma_jj.
    let data = DMatrix::from_fn(16, 2, |i, j| match j {
        0 => if i % 2 == 0 { 1.0 } else { -1.0 },
        _ => if (i / 2) % 2 == 0 { 2.0 } else { -2.0 },
    });
    let est = nodewise_precision(&ReturnPanel::unlabeled(data).unwrap()).unwrap();
    assert_eq!(est.support_sizes, vec![0, 0]);
    assert_eq!(est.theta[(0, 1)], 0.0);
    assert_eq!(est.theta[(1, 0)], 0.0);
    assert!((est.theta[(0, 0)] - 1.0).abs() < 1e-15);
    assert!((est.theta[(1, 1)] - 0.25).abs() < 1e-15);
}

#[test]
fn ar1_precision_is_nearly_tridiagonal() {
    let (p, n, rho) = (10usize, 2000usize, 0.6f64);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let innov = gaussian(&mut rng, n, p);
    // Columns follow an AR(1) across assets, so the true precision is
    // tridiagonal with off-diagonal -rho / (1 - rho^2).
    let mut data = DMatrix::zeros(n, p);
    for i in 0..n {
        data[(i, 0)] = innov[(i, 0)];
        for j in 1..p {
            data[(i, j)] = rho * data[(i, j - 1)] + (1.0 - rho * rho).sqrt() * innov[(i, j)];
        }
    }
    let est = nodewise_precision(&ReturnPanel::unlabeled(data).unwrap()).unwrap();
    let off = -rho / (1.0 - rho * rho);
    for j in 1..p - 1 {
        assert!((est.theta[(j, j - 1)] - off).abs() < 0.25, "row {j}: {}", est.theta[(j, j - 1)]);
        for k in 0..p {
            if k.abs_diff(j) > 1 {
                assert!(est.theta[(j, k)].abs() < 0.1);
            }
        }
    }
}

#[test]
fn more_assets_than_observations() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let panel = ReturnPanel::unlabeled(gaussian(&mut rng, 40, 80) * 0.01).unwrap();
    let est = nodewise_precision(&panel).unwrap();
    assert!(est.theta.iter().all(|v| v.is_finite()));
    assert!(est.support_sizes.iter().all(|&s| s < 40));
    for gap in kkt_report(&est, &sample_covariance(&panel)).unwrap() {
        assert!(gap.gap <= gap.bound + 1e-8);
        assert!(gap.diagonal_error <= 1e-8);
    }
}

#[test]
fn asset_permutation_permutes_the_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let data = gaussian(&mut rng, 120, 12);
    let perm: Vec<usize> = vec![5, 0, 11, 3, 7, 1, 9, 2, 10, 4, 8, 6];
    let permuted = DMatrix::from_fn(120, 12, |i, j| data[(i, perm[j])]);
    let a = nodewise_precision(&ReturnPanel::unlabeled(data).unwrap()).unwrap();
    let b = nodewise_precision(&ReturnPanel::unlabeled(permuted).unwrap()).unwrap();
    for i in 0..12 {
        for j in 0..12 {
            assert!((b.theta[(i, j)] - a.theta[(perm[i], perm[j])]).abs() < 1e-7);
        }
    }
}

#[test]
fn vanishing_penalty_approaches_the_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let panel = ReturnPanel::unlabeled(gaussian(&mut rng, 400, 6)).unwrap();
    let cfg = NodewiseConfig {
        lambda: LambdaRule::Fixed(1e-10),
        ..NodewiseConfig::default()
    };
    let est = nodewise_precision_with(&panel, &cfg).unwrap();
    let inv = invert_pd(&sample_covariance(&panel)).unwrap();
    let diff = (&est.theta - inv.as_matrix()).amax();
    assert!(diff < 1e-6, "max deviation {diff:e}");
}

#[test]
fn row_penalties_and_tau_are_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let panel = ReturnPanel::unlabeled(gaussian(&mut rng, 60, 15)).unwrap();
    let est = nodewise_precision(&panel).unwrap();
    assert_eq!(est.dim(), 15);
    assert!(est.lambdas.iter().all(|&l| l > 0.0));
    assert!(est.tau_sq.iter().all(|&t| t > 0.0));
    let y = DVector::from_iterator(15, (0..15).map(|j| est.theta[(j, j)]));
    assert!(y.iter().zip(est.tau_sq.iter()).all(|(d, t)| (d * t - 1.0).abs() < 1e-12));
}
