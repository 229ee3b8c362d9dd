//! The three subcommands. Each resolves its settings, runs, writes CSVs and
//! echoes the resolved settings as `config.txt` next to its output.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use relaxed_portfolio::backtest::{self, BacktestConfig, WindowMode, DEFAULT_COST};
use relaxed_portfolio::estimators::{self, CovarianceEstimate};
use relaxed_portfolio::io;
use relaxed_portfolio::nodewise::{self, NodewiseConfig};
use relaxed_portfolio::portfolio;
use relaxed_portfolio::simulation::{self, DgpKind, DgpParams, DgpSpec, FactorParams, DAILY_TARGET};
use relaxed_portfolio::{linalg, Error, EstimatorKind, Period, PortfolioKind, ReturnPanel};

use crate::settings::{KeySpec, Settings};

/// Why a run stopped. Usage problems exit with 1, estimation failures with 2.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core { context: String, source: Error },
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core { source, .. } => match source {
                Error::Invalid(_)
                | Error::Dimension { .. }
                | Error::NonFinite(_)
                | Error::Input { .. }
                | Error::Io(_)
                | Error::Csv(_) => 1,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(msg) => f.write_str(msg),
            Failure::Core { context, source } => write!(f, "{context}: {source}"),
        }
    }
}

impl From<String> for Failure {
    fn from(msg: String) -> Self {
        Failure::Usage(msg)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

trait Context<T> {
    fn context(self, what: impl Into<String>) -> Outcome<T>;
}

impl<T> Context<T> for relaxed_portfolio::Result<T> {
    fn context(self, what: impl Into<String>) -> Outcome<T> {
        self.map_err(|source| Failure::Core {
            context: what.into(),
            source,
        })
    }
}

fn io_context<T>(r: std::io::Result<T>, path: &Path) -> Outcome<T> {
    r.map_err(|e| Failure::Core {
        context: format!("writing {}", path.display()),
        source: Error::Io(e),
    })
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    io_context(File::create(path), path).map(BufWriter::new)
}

fn write_with<F>(path: &Path, body: F) -> Outcome<()>
where
    F: FnOnce(&mut BufWriter<File>) -> relaxed_portfolio::Result<()>,
{
    let mut out = create(path)?;
    body(&mut out).context(format!("writing {}", path.display()))?;
    io_context(out.flush(), path)
}

fn prepare_dir(dir: &Path) -> Outcome<()> {
    io_context(fs::create_dir_all(dir), dir)
}

fn echo_config(settings: &Settings, dir: &Path) -> Outcome<()> {
    let path = dir.join("config.txt");
    io_context(fs::write(&path, settings.render()), &path)
}

fn load_panel(settings: &Settings) -> Outcome<ReturnPanel> {
    let input: PathBuf = settings.require("input")?;
    let period: Period = settings.require::<Period>("period")?;
    log::info!("reading {}", input.display());
    let panel = ReturnPanel::from_csv_path(&input).context("input")?;
    Ok(panel.with_period(period))
}

fn target(settings: &Settings, period: Period) -> Outcome<f64> {
    Ok(settings
        .get::<f64>("rho1")?
        .unwrap_or_else(|| BacktestConfig::target_for(period)))
}

fn sidecar_path(matrix: &Path) -> PathBuf {
    let stem = matrix.file_stem().and_then(|s| s.to_str()).unwrap_or("precision");
    matrix.with_file_name(format!("{stem}.rows.csv"))
}

pub fn estimate_keys() -> Vec<KeySpec> {
    vec![
        ("input", None),
        ("output", None),
        ("output_dir", None),
        ("method", Some("nodewise".into())),
        ("portfolio", None),
        ("rho1", None),
        ("period", Some("daily".into())),
        ("pd_repair", Some("false".into())),
    ]
}

/// Precision (nodewise) or covariance (baselines) estimate, plus optional
/// portfolio weights.
pub fn estimate(settings: &Settings) -> Outcome<()> {
    let panel = load_panel(settings)?;
    let method: EstimatorKind = settings.require("method")?;
    let kind: Option<PortfolioKind> = settings.get("portfolio")?;
    let rho1 = target(settings, panel.period())?;

    let output: Option<PathBuf> = settings.get("output")?;
    let dir: PathBuf = match (settings.get::<PathBuf>("output_dir")?, &output) {
        (Some(d), _) => d,
        (None, Some(o)) => o.parent().map(Path::to_path_buf).unwrap_or_default(),
        (None, None) => PathBuf::from("."),
    };
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    prepare_dir(&dir)?;
    let default_name = if method == EstimatorKind::Nodewise { "precision.csv" } else { "covariance.csv" };
    let matrix_path = output.unwrap_or_else(|| dir.join(default_name));
    let ctx = format!("estimate ({method})");

    let theta = if method == EstimatorKind::Nodewise {
        let cfg = NodewiseConfig {
            pd_repair: settings.flag("pd_repair")?,
            ..Default::default()
        };
        let est = nodewise::nodewise_precision_with(&panel, &cfg).context(ctx.clone())?;
        let meta = format!("method=nodewise,repaired={}", est.repaired);
        write_with(&matrix_path, |w| io::write_matrix_csv(w, &est.theta, panel.labels(), Some(&meta)))?;
        write_with(&sidecar_path(&matrix_path), |w| io::write_precision_sidecar(w, &est))?;
        Some(est.theta)
    } else {
        let est = match method {
            EstimatorKind::LedoitWolf => estimators::ledoit_wolf(&panel),
            EstimatorKind::Poet => estimators::poet(&panel),
            _ => Ok(CovarianceEstimate::sample(&panel)),
        }
        .context(ctx.clone())?;
        write_with(&matrix_path, |w| {
            io::write_matrix_csv(w, est.matrix.as_matrix(), panel.labels(), Some(&est.describe()))
        })?;
        match kind {
            Some(_) => Some(estimators::to_precision(&est).context(ctx.clone())?.into_inner()),
            None => None,
        }
    };
    log::info!("wrote {}", matrix_path.display());

    if let (Some(kind), Some(theta)) = (kind, theta) {
        let mu = linalg::sample_mean(&panel);
        let (w, v) = match kind {
            PortfolioKind::Gmv => (portfolio::gmv_weights(&theta), portfolio::gmv_variance(&theta)),
            PortfolioKind::Markowitz => (
                portfolio::markowitz_weights(&theta, &mu, rho1),
                portfolio::markowitz_variance(&theta, &mu, rho1),
            ),
        };
        let pctx = format!("{ctx} {}", kind.name());
        let (w, v) = (w.context(pctx.clone())?, v.context(pctx)?);
        let path = dir.join("weights.csv");
        write_with(&path, |out| io::write_weights_csv(out, &w, panel.labels(), v.value))?;
        log::info!("wrote {}", path.display());
    }
    echo_config(settings, &dir)
}

pub fn simulate_keys() -> Vec<KeySpec> {
    let d = DgpParams::default();
    let f = FactorParams::default();
    let triple = |v: [f64; 3]| format!("{},{},{}", v[0], v[1], v[2]);
    vec![
        ("dgp", Some("sparse_cholesky".into())),
        ("p", Some("50,100,200".into())),
        ("n", Some("252".into())),
        ("reps", Some("100".into())),
        ("seed", Some("0".into())),
        ("method", Some("nodewise,ledoit_wolf,poet".into())),
        ("rho1", Some(DAILY_TARGET.to_string())),
        ("output_dir", Some(".".into())),
        ("per_metric", Some("false".into())),
        ("mean_mu", Some(d.mean_mu.to_string())),
        ("mean_sd", Some(d.mean_sd.to_string())),
        ("gamma_shape", Some(d.gamma_shape.to_string())),
        ("gamma_rate", Some(d.gamma_rate.to_string())),
        ("offdiag_sd", Some(d.offdiag_sd.to_string())),
        ("t_dof", Some(d.t_dof.to_string())),
        ("fill_probability", Some(d.fill_probability.to_string())),
        ("fill_range", Some(d.fill_range.to_string())),
        ("toeplitz_rho", Some(d.toeplitz_rho.to_string())),
        ("factor_mean", Some(triple(f.factor_mean))),
        ("factor_var", Some(triple(f.factor_var))),
        ("loading_mean", Some(f.loading_mean.to_string())),
        ("loading_sd", Some(f.loading_sd.to_string())),
    ]
}

fn triple(settings: &Settings, key: &str) -> Outcome<[f64; 3]> {
    let v: Vec<f64> = settings.list(key)?;
    v.try_into()
        .map_err(|v: Vec<f64>| Failure::Usage(format!("{key} needs 3 values, got {}", v.len())))
}

fn dgp_params(settings: &Settings) -> Outcome<DgpParams> {
    Ok(DgpParams {
        mean_mu: settings.require("mean_mu")?,
        mean_sd: settings.require("mean_sd")?,
        gamma_shape: settings.require("gamma_shape")?,
        gamma_rate: settings.require("gamma_rate")?,
        offdiag_sd: settings.require("offdiag_sd")?,
        t_dof: settings.require("t_dof")?,
        fill_probability: settings.require("fill_probability")?,
        fill_range: settings.require("fill_range")?,
        toeplitz_rho: settings.require("toeplitz_rho")?,
        factor: FactorParams {
            factor_mean: triple(settings, "factor_mean")?,
            factor_var: triple(settings, "factor_var")?,
            loading_mean: settings.require("loading_mean")?,
            loading_sd: settings.require("loading_sd")?,
        },
    })
}

/// Monte-Carlo study over the DGP x p grid.
pub fn simulate(settings: &Settings) -> Outcome<()> {
    let kinds: Vec<DgpKind> = settings.list("dgp")?;
    let ps: Vec<usize> = settings.list("p")?;
    let estimators: Vec<EstimatorKind> = settings.list("method")?;
    let n: usize = settings.require("n")?;
    let reps: usize = settings.require("reps")?;
    let seed: u64 = settings.require("seed")?;
    let rho1: f64 = settings.require("rho1")?;
    let dir: PathBuf = settings.require("output_dir")?;
    let params = dgp_params(settings)?;
    if kinds.is_empty() || ps.is_empty() || estimators.is_empty() {
        return Err(Failure::Usage("dgp, p and method each need at least one value".into()));
    }

    let mut grid = Vec::new();
    for &kind in &kinds {
        for &p in &ps {
            let spec = DgpSpec {
                params,
                ..DgpSpec::new(kind, p, n)
            };
            spec.validate().context("simulate")?;
            grid.push(spec);
        }
    }
    log::info!(
        "simulating {} cells x {reps} replications on {} threads",
        grid.len(),
        rayon::current_num_threads()
    );
    let table = simulation::run_study(&grid, &estimators, reps, seed, rho1).context("simulate")?;

    prepare_dir(&dir)?;
    let path = dir.join("study.csv");
    write_with(&path, |w| io::write_study_csv(w, &table, None))?;
    if settings.flag("per_metric")? {
        let metrics: BTreeSet<&str> = table.rows.iter().map(|r| r.metric.as_str()).collect();
        for m in metrics {
            write_with(&dir.join(format!("study_{m}.csv")), |w| io::write_study_csv(w, &table, Some(m)))?;
        }
    }
    let record: String = params
        .record()
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect();
    let params_path = dir.join("params.txt");
    io_context(fs::write(&params_path, record), &params_path)?;
    log::info!("wrote {}", path.display());
    echo_config(settings, &dir)
}

pub fn backtest_keys() -> Vec<KeySpec> {
    vec![
        ("input", None),
        ("output_dir", Some(".".into())),
        ("method", Some("nodewise".into())),
        ("portfolio", Some("gmv".into())),
        ("n_in", None),
        ("cost_bp", Some((DEFAULT_COST * 1e4).to_string())),
        ("rho1", None),
        ("period", Some("daily".into())),
        ("window", Some("rolling".into())),
    ]
}

/// Rolling out-of-sample evaluation.
pub fn backtest(settings: &Settings) -> Outcome<()> {
    let panel = load_panel(settings)?;
    let estimator: EstimatorKind = settings.require("method")?;
    let kind: PortfolioKind = settings.require("portfolio")?;
    let n_in: usize = settings.require("n_in")?;
    let cost_bp: f64 = settings.require("cost_bp")?;
    let window: WindowMode = settings.require("window")?;
    let dir: PathBuf = settings.require("output_dir")?;
    if !(cost_bp >= 0.0 && cost_bp.is_finite()) {
        return Err(Failure::Usage(format!("cost_bp must be finite and >= 0, got {cost_bp}")));
    }
    let cfg = BacktestConfig {
        rho1: target(settings, panel.period())?,
        cost: cost_bp * 1e-4,
        window,
        ..BacktestConfig::new(n_in, estimator, kind)
    };
    let report = backtest::roll(&panel, &cfg).context(format!("backtest ({estimator} {})", kind.name()))?;

    prepare_dir(&dir)?;
    write_with(&dir.join("periods.csv"), |w| io::write_backtest_periods(w, &report, panel.labels()))?;
    write_with(&dir.join("summary.csv"), |w| io::write_backtest_summary(w, &report))?;
    log::info!(
        "{} periods, sharpe {:.4} (with costs {:.4})",
        report.periods.len(),
        report.summary.sharpe,
        report.summary.sharpe_net
    );
    echo_config(settings, &dir)
}
