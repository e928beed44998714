//! Log returns, per-window average volatility, and return
//! normalization.
//!
//! All operations are pure functions over immutable panels, so windows
//! can be evaluated concurrently and results do not depend on
//! evaluation order.

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::ingest::{InstrumentId, PricePanel, WindowSlice};
use crate::numeric::compensated_mean;

/// Default variance floor below which a column is treated as constant.
/// Forward-filled illiquid instruments can produce all-zero return
/// windows, where normalization is undefined.
pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-12;

/// Daily log returns for one window; one row fewer than the price
/// slice it came from.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    instruments: Vec<InstrumentId>,
    values: Vec<Vec<f64>>,
    window_label: String,
}

impl ReturnPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        instruments: Vec<InstrumentId>,
        values: Vec<Vec<f64>>,
        window_label: impl Into<String>,
    ) -> Result<Self> {
        if values.len() != dates.len()
            || values
                .iter()
                .any(|row| row.len() != instruments.len() || row.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidConfig(
                "return panel must be rectangular with finite values".into(),
            ));
        }
        Ok(ReturnPanel {
            dates,
            instruments,
            values,
            window_label: window_label.into(),
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn instruments(&self) -> &[InstrumentId] {
        &self.instruments
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn window_label(&self) -> &str {
        &self.window_label
    }

    pub fn column(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(move |row| row[i])
    }
}

/// Mean absolute log return per instrument over one window, plus the
/// cross-sectional average.
#[derive(Debug, Clone)]
pub struct VolatilityReport {
    pub per_index: Vec<(InstrumentId, f64)>,
    pub cross_sectional_mean: f64,
    pub window_label: String,
}

/// Returns standardized to zero mean and unit standard deviation per
/// column; zero-variance columns are dropped and listed in `excluded`.
#[derive(Debug, Clone)]
pub struct NormalizedReturnPanel {
    dates: Vec<NaiveDate>,
    instruments: Vec<InstrumentId>,
    values: Vec<Vec<f64>>,
    window_label: String,
    pub excluded: Vec<InstrumentId>,
}

impl NormalizedReturnPanel {
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn instruments(&self) -> &[InstrumentId] {
        &self.instruments
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn window_label(&self) -> &str {
        &self.window_label
    }

    pub fn column(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(move |row| row[i])
    }
}

/// Daily log return: the log of the ratio of consecutive closes.
pub fn log_returns(panel: &PricePanel, window_label: &str) -> Result<ReturnPanel> {
    if panel.n_dates() < 2 {
        return Err(Error::TooFewRows {
            context: format!("log returns for window {window_label}"),
            have: panel.n_dates(),
            need: 2,
        });
    }
    let values: Vec<Vec<f64>> = (1..panel.n_dates())
        .map(|t| {
            (0..panel.n_instruments())
                .map(|i| (panel.close(t, i) / panel.close(t - 1, i)).ln())
                .collect()
        })
        .collect();
    ReturnPanel::new(
        panel.dates()[1..].to_vec(),
        panel.instruments().to_vec(),
        values,
        window_label,
    )
}

/// Log returns of a window slice, using its leading context row when
/// present.
pub fn window_log_returns(slice: &WindowSlice) -> Result<ReturnPanel> {
    log_returns(&slice.panel, &slice.label)
}

/// Average volatility per instrument: the mean absolute log return
/// over the window.
pub fn volatility(returns: &ReturnPanel) -> Result<VolatilityReport> {
    if returns.n_rows() < 1 {
        return Err(Error::TooFewRows {
            context: format!("volatility for window {}", returns.window_label),
            have: 0,
            need: 1,
        });
    }
    let per_index: Vec<(InstrumentId, f64)> = returns
        .instruments
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let v = compensated_mean(returns.column(i).map(f64::abs), returns.n_rows());
            (id.clone(), v)
        })
        .collect();
    let cross_sectional_mean =
        compensated_mean(per_index.iter().map(|(_, v)| *v), per_index.len());
    Ok(VolatilityReport {
        per_index,
        cross_sectional_mean,
        window_label: returns.window_label.clone(),
    })
}

/// Standardizes each column to zero mean and unit standard deviation.
///
/// The standard deviation divides by the number of returns (not N-1),
/// so the cross-product average of two normalized columns is exactly a
/// Pearson coefficient and the self-correlation is 1. Columns with
/// sigma below `sigma_floor` are excluded and reported.
pub fn normalize(returns: &ReturnPanel, sigma_floor: f64) -> Result<NormalizedReturnPanel> {
    if returns.n_rows() < 3 {
        return Err(Error::TooFewRows {
            context: format!("normalization for window {}", returns.window_label),
            have: returns.n_rows(),
            need: 3,
        });
    }
    let t = returns.n_rows();
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (i, id) in returns.instruments.iter().enumerate() {
        let mean = compensated_mean(returns.column(i), t);
        let var = compensated_mean(returns.column(i).map(|x| (x - mean) * (x - mean)), t);
        let sigma = var.max(0.0).sqrt();
        if sigma < sigma_floor {
            excluded.push(id.clone());
        } else {
            kept.push(id.clone());
            columns.push(returns.column(i).map(|x| (x - mean) / sigma).collect());
        }
    }
    if kept.is_empty() {
        return Err(Error::AllColumnsExcluded {
            window: returns.window_label.clone(),
        });
    }
    let values: Vec<Vec<f64>> = (0..t)
        .map(|row| columns.iter().map(|col| col[row]).collect())
        .collect();
    Ok(NormalizedReturnPanel {
        dates: returns.dates.clone(),
        instruments: kept,
        values,
        window_label: returns.window_label.clone(),
        excluded,
    })
}
