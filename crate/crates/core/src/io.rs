//! CSV emitters. Floats are written with 17 significant digits so reruns
//! can be compared byte for byte.

use std::io::Write;

use nalgebra::DMatrix;

use crate::backtest::BacktestReport;
use crate::error::Result;
use crate::nodewise::PrecisionEstimate;
use crate::portfolio::{self, PortfolioWeights};
use crate::simulation::StudyTable;

/// Round-trip representation of an `f64`. Negative zero prints as zero.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        "0.0000000000000000e0".to_string()
    } else if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Labelled square matrix, optionally preceded by a `# key=value,...` line.
pub fn write_matrix_csv<W: Write>(
    mut out: W,
    matrix: &DMatrix<f64>,
    labels: &[String],
    metadata: Option<&str>,
) -> Result<()> {
    if let Some(meta) = metadata {
        writeln!(out, "# {meta}")?;
    }
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["asset".to_string()];
    header.extend(labels.iter().cloned());
    wtr.write_record(&header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend(matrix.row(i).iter().map(|v| fmt_f64(*v)));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-row tuning record of a nodewise estimate: `(j, asset, lambda, tau_sq, support_size)`.
pub fn write_precision_sidecar<W: Write>(out: W, est: &PrecisionEstimate) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["j", "asset", "lambda", "tau_sq", "support_size"])?;
    for j in 0..est.dim() {
        wtr.write_record([
            j.to_string(),
            est.labels[j].clone(),
            fmt_f64(est.lambdas[j]),
            fmt_f64(est.tau_sq[j]),
            est.support_sizes[j].to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Weights by asset followed by a one-line `# ...` summary with variance,
/// exposure and, for Markowitz, `A, B, D` and the constraint residuals.
pub fn write_weights_csv<W: Write>(
    mut out: W,
    weights: &PortfolioWeights,
    labels: &[String],
    variance: f64,
) -> Result<()> {
    {
        let mut wtr = csv::Writer::from_writer(&mut out);
        wtr.write_record(["asset", "weight"])?;
        for (label, w) in labels.iter().zip(weights.weights.iter()) {
            wtr.write_record([label.clone(), fmt_f64(*w)])?;
        }
        wtr.flush()?;
    }
    let mut summary = format!(
        "# portfolio={},variance={},exposure={},budget_residual={}",
        weights.kind.name(),
        fmt_f64(variance),
        fmt_f64(portfolio::gross_exposure(weights)),
        fmt_f64(weights.budget_residual)
    );
    if let Some(abd) = weights.abd {
        summary.push_str(&format!(
            ",target={},A={},B={},D={},return_residual={}",
            fmt_f64(weights.target.unwrap_or(f64::NAN)),
            fmt_f64(abd.a),
            fmt_f64(abd.b),
            fmt_f64(abd.d),
            fmt_f64(weights.return_residual.unwrap_or(f64::NAN))
        ));
    }
    writeln!(out, "{summary}")?;
    Ok(())
}

pub const STUDY_COLUMNS: [&str; 9] = [
    "dgp", "p", "n", "estimator", "metric", "median", "nan_count", "reps", "base_seed",
];

/// Study table rows, optionally restricted to one metric.
pub fn write_study_csv<W: Write>(out: W, table: &StudyTable, metric: Option<&str>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(STUDY_COLUMNS)?;
    for row in table.rows.iter().filter(|r| metric.is_none_or(|m| r.metric == m)) {
        wtr.write_record([
            row.dgp.name().to_string(),
            row.p.to_string(),
            row.n.to_string(),
            row.estimator.name().to_string(),
            row.metric.clone(),
            fmt_f64(row.median),
            row.nan_count.to_string(),
            row.reps.to_string(),
            row.base_seed.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-period records: `t, gross_return, net_return, turnover`, then one
/// weight column per asset.
pub fn write_backtest_periods<W: Write>(out: W, report: &BacktestReport, labels: &[String]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["t", "gross_return", "net_return", "turnover"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(labels.iter().map(|l| format!("w_{l}")));
    wtr.write_record(&header)?;
    for rec in &report.periods {
        let mut row = vec![
            rec.t.to_string(),
            fmt_f64(rec.gross_return),
            fmt_f64(rec.net_return),
            fmt_f64(rec.turnover),
        ];
        row.extend(rec.weights.iter().map(|w| fmt_f64(*w)));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// One-row summary with the columns Return, Variance, Sharpe and Turnover
/// without costs, then Return, Variance and Sharpe with costs.
pub fn write_backtest_summary<W: Write>(out: W, report: &BacktestReport) -> Result<()> {
    let s = &report.summary;
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "estimator",
        "portfolio",
        "n_in",
        "periods",
        "return",
        "variance",
        "sharpe",
        "turnover",
        "return_tc",
        "variance_tc",
        "sharpe_tc",
    ])?;
    wtr.write_record([
        report.config.estimator.name().to_string(),
        report.config.portfolio.name().to_string(),
        report.config.n_in.to_string(),
        report.periods.len().to_string(),
        fmt_f64(s.mean),
        fmt_f64(s.variance),
        fmt_f64(s.sharpe),
        fmt_f64(s.turnover),
        fmt_f64(s.mean_net),
        fmt_f64(s.variance_net),
        fmt_f64(s.sharpe_net),
    ])?;
    wtr.flush()?;
    Ok(())
}
