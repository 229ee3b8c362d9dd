//! Excess-return panels and their CSV loader.
//!
//! Values are taken as given: the loader does not convert between simple and
//! log returns. Rows are time-ascending.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Sampling frequency of a panel. Only used to pick default return targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Period {
    #[default]
    Daily,
    Monthly,
}

impl Period {
    pub fn name(self) -> &'static str {
        match self {
            Period::Daily => "daily",
            Period::Monthly => "monthly",
        }
    }
}

impl std::str::FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "daily" | "d" => Ok(Period::Daily),
            "monthly" | "m" => Ok(Period::Monthly),
            other => Err(Error::Invalid(format!("unknown period {other:?}"))),
        }
    }
}

/// `n x p` matrix of per-period excess returns with asset labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    data: DMatrix<f64>,
    labels: Vec<String>,
    period: Period,
    risk_free: Option<DVector<f64>>,
}

impl ReturnPanel {
    pub fn new(data: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        Self::with_risk_free(data, labels, None)
    }

    /// Builds a panel with generated labels `A0, A1, ...`.
    pub fn unlabeled(data: DMatrix<f64>) -> Result<Self> {
        let labels = (0..data.ncols()).map(|j| format!("A{j}")).collect();
        Self::new(data, labels)
    }

    pub fn with_risk_free(
        data: DMatrix<f64>,
        labels: Vec<String>,
        risk_free: Option<DVector<f64>>,
    ) -> Result<Self> {
        let (n, p) = data.shape();
        if n < 2 || p < 2 {
            return Err(Error::Invalid(format!(
                "panel needs at least 2 rows and 2 assets, got {n}x{p}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("return panel"));
        }
        if labels.len() != p {
            return Err(Error::Dimension {
                expected: format!("{p} asset labels"),
                got: labels.len().to_string(),
            });
        }
        let mut seen = HashSet::with_capacity(p);
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::Invalid(format!("duplicate asset label {label:?}")));
            }
        }
        if let Some(rf) = &risk_free {
            if rf.len() != n {
                return Err(Error::Dimension {
                    expected: format!("{n} risk-free observations"),
                    got: rf.len().to_string(),
                });
            }
            if rf.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("risk-free series"));
            }
        }
        Ok(Self {
            data,
            labels,
            period: Period::Daily,
            risk_free,
        })
    }

    pub fn with_period(mut self, period: Period) -> Self {
        self.period = period;
        self
    }

    pub fn n_obs(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn period(&self) -> Period {
        self.period
    }

    pub fn risk_free(&self) -> Option<&DVector<f64>> {
        self.risk_free.as_ref()
    }

    /// Contiguous block of rows `[start, start + len)` as a new panel.
    pub fn rows(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n_obs() {
            return Err(Error::Dimension {
                expected: format!("rows within 0..{}", self.n_obs()),
                got: format!("{start}..{}", start + len),
            });
        }
        let data = self.data.rows(start, len).into_owned();
        let rf = self
            .risk_free
            .as_ref()
            .map(|rf| rf.rows(start, len).into_owned());
        Ok(Self::with_risk_free(data, self.labels.clone(), rf)?.with_period(self.period))
    }

    /// Data with every column demeaned.
    pub fn centered(&self) -> DMatrix<f64> {
        let mean = crate::linalg::sample_mean(self);
        let mut out = self.data.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mean[j]);
        }
        out
    }

    /// Loads a panel from CSV. The header row holds asset labels; a column
    /// named `RF` becomes the risk-free series.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::Input {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_csv_reader(file).map_err(|e| match e {
            Error::Input { .. } => e,
            other => Error::Input {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let rf_col = headers.iter().position(|h| h == "RF");
        let labels: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != rf_col)
            .map(|(_, h)| h.to_string())
            .collect();
        let p = labels.len();

        let mut values = Vec::new();
        let mut rf = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::Invalid(format!(
                    "row {} has {} fields, header has {}",
                    row + 1,
                    record.len(),
                    headers.len()
                )));
            }
            for (i, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Invalid(format!(
                        "row {}, column {:?}: cannot parse {field:?}",
                        row + 1,
                        &headers[i]
                    ))
                })?;
                if Some(i) == rf_col {
                    rf.push(v);
                } else {
                    values.push(v);
                }
            }
        }
        let n = values.len() / p.max(1);
        let data = DMatrix::from_row_slice(n, p, &values);
        let rf = rf_col.map(|_| DVector::from_vec(rf));
        Self::with_risk_free(data, labels, rf)
    }
}
