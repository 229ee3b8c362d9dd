use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use relaxed_portfolio::backtest::{roll, roll_with, summarize, BacktestConfig, PeriodRecord};
use relaxed_portfolio::estimators::{ledoit_wolf, poet};
use relaxed_portfolio::simulation::{
    evaluate_precision, generate, run_replication, run_study, DgpKind, DgpSpec, DAILY_TARGET,
};
use relaxed_portfolio::{CovarianceMeta, EstimatorKind, PortfolioKind, ReturnPanel};

fn gaussian_panel(seed: u64, n: usize, p: usize, scale: f64) -> ReturnPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = DMatrix::from_fn(n, p, |_, _| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng));
    ReturnPanel::unlabeled(data).unwrap()
}

#[test]
fn ledoit_wolf_shrinks_hard_when_assets_swamp_observations() {
    let est = ledoit_wolf(&gaussian_panel(1, 10, 100, 0.01)).unwrap();
    let CovarianceMeta::LedoitWolf { shrinkage, target_scale } = est.meta else {
        panic!("wrong metadata");
    };
    assert!(shrinkage >= 0.5, "shrinkage {shrinkage}");
    assert!(target_scale > 0.0);
    assert!(est.matrix.min_eigenvalue().unwrap() > 0.0);
}

#[test]
fn poet_on_a_factor_panel_is_positive_definite() {
    let (panel, _) = generate(&DgpSpec::new(DgpKind::Factor3, 60, 200), 3).unwrap();
    let est = poet(&panel).unwrap();
    let CovarianceMeta::Poet { k_hat, zeta } = est.meta else {
        panic!("wrong metadata");
    };
    assert!(k_hat <= 8 && zeta >= 0.0);
    assert!(est.matrix.min_eigenvalue().unwrap() > 0.0);
}

#[test]
fn true_precision_scores_zero_error() {
    let (_, truth) = generate(&DgpSpec::new(DgpKind::SparseCholesky, 20, 100), 4).unwrap();
    let m = evaluate_precision(
        truth.theta_true.as_matrix(),
        &truth.mu_true,
        &truth.sigma_true,
        &truth,
        DAILY_TARGET,
    );
    for pm in [m.gmv, m.markowitz] {
        assert!(pm.variance_ratio_err <= 1e-10);
        assert!(pm.variance_err <= 1e-10);
        assert!(pm.weight_err_l1 <= 1e-10);
        assert!(pm.risk_err == 0.0);
        assert!(pm.exposure >= 1.0 - 1e-12);
    }
}

#[test]
fn nodewise_replication_is_sane_and_repeatable() {
    let spec = DgpSpec::new(DgpKind::SparseCholesky, 50, 252);
    let kinds = [EstimatorKind::Nodewise, EstimatorKind::LedoitWolf];
    let a = run_replication(&spec, &kinds, DAILY_TARGET, 11).unwrap();
    let b = run_replication(&spec, &kinds, DAILY_TARGET, 11).unwrap();
    assert_eq!(a, b);
    let nw = a.get(EstimatorKind::Nodewise).unwrap();
    assert!(nw.gmv.exposure >= 1.0 - 1e-12);
}

#[test]
fn nodewise_gmv_metrics_are_finite_on_sparse_cholesky() {
    // The Markowitz side can fail when the non-symmetric estimate is
    // indefinite on span(1, mu); those cells are NaN by design.
    let spec = DgpSpec::new(DgpKind::SparseCholesky, 50, 252);
    let mut finite = 0;
    for seed in 0..100 {
        let r = run_replication(&spec, &[EstimatorKind::Nodewise], DAILY_TARGET, seed).unwrap();
        let m = r.get(EstimatorKind::Nodewise).unwrap();
        finite += usize::from(m.gmv.values().iter().all(|v| v.is_finite()));
    }
    assert!(finite >= 95, "GMV metrics finite in {finite}/100 replications");
}

#[test]
fn single_replication_study_has_every_cell() {
    let specs = [
        DgpSpec::new(DgpKind::Toeplitz, 15, 60),
        DgpSpec::new(DgpKind::RandomCovGaussian, 10, 60),
    ];
    let kinds = [EstimatorKind::Nodewise, EstimatorKind::LedoitWolf, EstimatorKind::Poet];
    let table = run_study(&specs, &kinds, 1, 9, DAILY_TARGET).unwrap();
    assert_eq!(table.rows.len(), 2 * 3 * 10);
    assert!(table.median(DgpKind::Toeplitz, 15, EstimatorKind::Poet, "gmv_exposure").is_some());
}

#[test]
fn equal_weight_rule_passes_returns_through() {
    let panel = gaussian_panel(6, 40, 4, 0.01);
    let mut cfg = BacktestConfig::new(20, EstimatorKind::Sample, PortfolioKind::Gmv);
    cfg.cost = 0.0;
    let report = roll_with(&panel, &cfg, |_| Ok(DVector::from_element(4, 0.25))).unwrap();
    assert_eq!(report.periods.len(), 20);
    for rec in &report.periods {
        let mean = panel.data().row(rec.t).sum() / 4.0;
        assert!((rec.gross_return - mean).abs() < 1e-15);
        assert_eq!(rec.net_return, rec.gross_return);
    }
}

#[test]
fn all_in_one_asset_has_no_turnover() {
    let panel = gaussian_panel(7, 30, 2, 0.01);
    let cfg = BacktestConfig::new(10, EstimatorKind::Sample, PortfolioKind::Gmv);
    let report = roll_with(&panel, &cfg, |_| Ok(DVector::from_vec(vec![1.0, 0.0]))).unwrap();
    for rec in &report.periods {
        assert!(rec.turnover.abs() < 1e-15);
        assert!((rec.net_return - rec.gross_return).abs() < 1e-15);
        assert_eq!(rec.gross_return, panel.data()[(rec.t, 0)]);
    }
}

#[test]
fn costs_only_lower_returns_and_summary_re_sums() {
    let (panel, _) = generate(&DgpSpec::new(DgpKind::Toeplitz, 10, 90), 2).unwrap();
    let cfg = BacktestConfig::new(60, EstimatorKind::LedoitWolf, PortfolioKind::Gmv);
    let report = roll(&panel, &cfg).unwrap();
    let s = &report.summary;
    assert!(s.mean_net <= s.mean);
    let n = report.periods.len() as f64;
    let mean = report.periods.iter().map(|r| r.gross_return).sum::<f64>() / n;
    let var = report.periods.iter().map(|r| (r.gross_return - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let turnover = report.periods.iter().map(|r| r.turnover).sum::<f64>() / n;
    assert!((s.mean - mean).abs() < 1e-12);
    assert!((s.variance - var).abs() < 1e-12);
    assert!((s.turnover - turnover).abs() < 1e-12);
    assert!((s.sharpe - mean / var.sqrt()).abs() < 1e-12);
}

#[test]
fn summary_of_hand_records() {
    let rec = |g: f64, net: f64, to: f64| PeriodRecord {
        t: 0,
        weights: DVector::zeros(1),
        gross_return: g,
        net_return: net,
        turnover: to,
    };
    let s = summarize(&[rec(0.02, 0.01, 0.4), rec(0.0, -0.01, 0.2), rec(0.01, 0.0, 0.0)]).unwrap();
    assert!((s.mean - 0.01).abs() < 1e-15);
    assert!((s.variance - 1e-4).abs() < 1e-15);
    assert!((s.mean_net - 0.0).abs() < 1e-15);
    assert!((s.turnover - 0.2).abs() < 1e-15);
}
