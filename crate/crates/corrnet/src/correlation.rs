//! Equal-time Pearson cross-correlation per window.
//!
//! Entries are accumulated independently with compensated summation,
//! so the matrix is bit-identical however the surrounding windows are
//! scheduled.

use crate::error::{Error, Result};
use crate::ingest::InstrumentId;
use crate::numeric::compensated_sum;
use crate::returns::NormalizedReturnPanel;

/// Symmetric Pearson matrix for one window, covering the instruments
/// that survived zero-variance exclusion.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    instruments: Vec<InstrumentId>,
    values: Vec<Vec<f64>>,
    window_label: String,
}

impl CorrelationMatrix {
    /// Builds a matrix from raw values, enforcing the stored-form
    /// invariants: exact symmetry, unit diagonal (within 1e-9 before
    /// being pinned), and entries clamped to `[-1, 1]`.
    pub fn new(
        instruments: Vec<InstrumentId>,
        values: Vec<Vec<f64>>,
        window_label: impl Into<String>,
    ) -> Result<Self> {
        let n = instruments.len();
        if values.len() != n || values.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidConfig(
                "correlation matrix must be square over its instruments".into(),
            ));
        }
        let mut clamped = values;
        for i in 0..n {
            if (clamped[i][i] - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "correlation diagonal [{i}] = {} is not 1",
                    clamped[i][i]
                )));
            }
            clamped[i][i] = 1.0;
            for j in (i + 1)..n {
                if clamped[i][j] != clamped[j][i] {
                    return Err(Error::InvalidConfig(format!(
                        "correlation matrix is not symmetric at ({i},{j})"
                    )));
                }
                if !clamped[i][j].is_finite() || clamped[i][j].abs() > 1.0 + 1e-9 {
                    return Err(Error::InvalidConfig(format!(
                        "correlation entry ({i},{j}) = {} out of range",
                        clamped[i][j]
                    )));
                }
                let v = clamped[i][j].clamp(-1.0, 1.0);
                clamped[i][j] = v;
                clamped[j][i] = v;
            }
        }
        Ok(CorrelationMatrix {
            instruments,
            values: clamped,
            window_label: window_label.into(),
        })
    }

    pub fn instruments(&self) -> &[InstrumentId] {
        &self.instruments
    }

    pub fn n(&self) -> usize {
        self.instruments.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn window_label(&self) -> &str {
        &self.window_label
    }
}

/// Pearson matrix of a normalized panel: `C[i][j]` is the average of
/// the cross products of columns `i` and `j`.
pub fn correlation_matrix(normalized: &NormalizedReturnPanel) -> Result<CorrelationMatrix> {
    let n = normalized.instruments().len();
    if n < 2 {
        return Err(Error::TooFewInstruments { have: n, need: 2 });
    }
    let t = normalized.n_rows();
    if t < 3 {
        return Err(Error::TooFewRows {
            context: format!("correlation for window {}", normalized.window_label()),
            have: t,
            need: 3,
        });
    }

    let columns: Vec<Vec<f64>> = (0..n).map(|i| normalized.column(i).collect()).collect();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let dot = compensated_sum(
                columns[i]
                    .iter()
                    .zip(&columns[j])
                    .map(|(a, b)| a * b),
            );
            let c = dot / t as f64;
            values[i][j] = c;
            values[j][i] = c;
        }
        debug_assert!((values[i][i] - 1.0).abs() < 1e-9);
    }
    CorrelationMatrix::new(
        normalized.instruments().to_vec(),
        values,
        normalized.window_label(),
    )
}

/// Arithmetic mean over the strictly-upper-triangle entries.
pub fn mean_correlation(corr: &CorrelationMatrix) -> Result<f64> {
    let n = corr.n();
    if n < 2 {
        return Err(Error::TooFewInstruments { have: n, need: 2 });
    }
    let pairs = n * (n - 1) / 2;
    let sum = compensated_sum(
        (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).map(|(i, j)| corr.get(i, j)),
    );
    Ok(sum / pairs as f64)
}
