//! Deterministic synthetic price panels with planted correlation
//! structure.
//!
//! Returns are drawn from a zero-mean multivariate normal with a
//! block correlation matrix (Cholesky-factored), scaled by a daily
//! volatility, and exponentiated cumulatively from a start price. The
//! same spec always produces the same panel byte for byte, so every
//! downstream metric has a ground-truth oracle without proprietary
//! market data.

mod linalg;
pub mod rng;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{weekday_dates, InstrumentId, PricePanel};

use linalg::{cholesky_psd, symmetric_eigenvalues};
use rng::{NormalSampler, Xoshiro256PlusPlus};

/// Pivot tolerance for the PSD validation of the implied correlation.
pub const CHOLESKY_PIVOT_TOLERANCE: f64 = 1e-10;

/// One block of mutually correlated instruments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    /// Number of member instruments.
    pub count: usize,
    /// Pairwise correlation inside the block.
    pub rho_in: f64,
}

/// Optional change of block structure partway through the panel.
///
/// Return steps are grouped into consecutive windows of `window_days`
/// returns; from window `at_window` onward the alternate blocks apply.
/// Matches a fixed-length windowing of the same length downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSwitch {
    pub at_window: usize,
    pub window_days: usize,
    pub blocks: Vec<BlockSpec>,
}

fn default_start_price() -> f64 {
    100.0
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid default date")
}

/// Full description of one synthetic panel. Serialized as JSON for
/// the `synth` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_instruments: usize,
    /// Number of price rows (one more than the number of returns).
    pub n_days: usize,
    pub blocks: Vec<BlockSpec>,
    /// Correlation between instruments of different blocks.
    pub rho_out: f64,
    /// Log-return standard deviation per day.
    pub daily_vol: f64,
    #[serde(default = "default_start_price")]
    pub start_price: f64,
    /// First calendar date of the weekday axis.
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
    /// Instrument labels; defaults to S00, S01, ...
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    #[serde(default)]
    pub regime_switch: Option<RegimeSwitch>,
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SynthSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidSynthSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_instruments == 0 {
            return Err(Error::InvalidSynthSpec("n_instruments must be >= 1".into()));
        }
        if self.n_days < 2 {
            return Err(Error::InvalidSynthSpec(
                "n_days must be >= 2 to produce at least one return".into(),
            ));
        }
        if !(self.daily_vol.is_finite() && self.daily_vol > 0.0) {
            return Err(Error::InvalidSynthSpec("daily_vol must be positive".into()));
        }
        if !(self.start_price.is_finite() && self.start_price > 0.0) {
            return Err(Error::InvalidSynthSpec("start_price must be positive".into()));
        }
        validate_blocks(&self.blocks, self.n_instruments)?;
        if !(-1.0..=1.0).contains(&self.rho_out) {
            return Err(Error::InvalidSynthSpec("rho_out must lie in [-1, 1]".into()));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.n_instruments {
                return Err(Error::InvalidSynthSpec(format!(
                    "{} labels given for {} instruments",
                    labels.len(),
                    self.n_instruments
                )));
            }
            for (i, l) in labels.iter().enumerate() {
                if l.is_empty() {
                    return Err(Error::InvalidSynthSpec(format!("label {i} is empty")));
                }
                if labels[..i].contains(l) {
                    return Err(Error::InvalidSynthSpec(format!("duplicate label {l:?}")));
                }
            }
        }
        if let Some(switch) = &self.regime_switch {
            if switch.window_days == 0 {
                return Err(Error::InvalidSynthSpec(
                    "regime_switch.window_days must be >= 1".into(),
                ));
            }
            validate_blocks(&switch.blocks, self.n_instruments)?;
        }
        Ok(())
    }

    fn instrument_labels(&self) -> Vec<InstrumentId> {
        match &self.labels {
            Some(labels) => labels.iter().map(InstrumentId::new).collect(),
            None => {
                let mut width = 2;
                while 10usize.pow(width as u32) < self.n_instruments {
                    width += 1;
                }
                (0..self.n_instruments)
                    .map(|i| InstrumentId::new(format!("S{i:0width$}")))
                    .collect()
            }
        }
    }
}

fn validate_blocks(blocks: &[BlockSpec], n_instruments: usize) -> Result<()> {
    if blocks.is_empty() {
        return Err(Error::InvalidSynthSpec("blocks must be non-empty".into()));
    }
    let total: usize = blocks.iter().map(|b| b.count).sum();
    if total != n_instruments {
        return Err(Error::InvalidSynthSpec(format!(
            "block sizes sum to {total}, expected {n_instruments}"
        )));
    }
    for (i, b) in blocks.iter().enumerate() {
        if b.count == 0 {
            return Err(Error::InvalidSynthSpec(format!("block {i} is empty")));
        }
        if !(-1.0..=1.0).contains(&b.rho_in) {
            return Err(Error::InvalidSynthSpec(format!(
                "block {i} rho_in {} outside [-1, 1]",
                b.rho_in
            )));
        }
    }
    Ok(())
}

/// The correlation matrix implied by a block structure: `rho_in` of
/// the containing block within blocks, `rho_out` across blocks, unit
/// diagonal.
pub fn block_correlation(blocks: &[BlockSpec], rho_out: f64, n: usize) -> Vec<Vec<f64>> {
    let mut block_of = Vec::with_capacity(n);
    for (b, spec) in blocks.iter().enumerate() {
        block_of.extend(std::iter::repeat_n(b, spec.count));
    }
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        matrix[i][i] = 1.0;
        for j in (i + 1)..n {
            let c = if block_of[i] == block_of[j] {
                blocks[block_of[i]].rho_in
            } else {
                rho_out
            };
            matrix[i][j] = c;
            matrix[j][i] = c;
        }
    }
    matrix
}

fn factor_blocks(blocks: &[BlockSpec], rho_out: f64, n: usize) -> Result<Vec<Vec<f64>>> {
    let corr = block_correlation(blocks, rho_out, n);
    cholesky_psd(&corr, CHOLESKY_PIVOT_TOLERANCE).ok_or_else(|| {
        let min_eigenvalue = symmetric_eigenvalues(&corr)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        Error::NotPositiveSemiDefinite { min_eigenvalue }
    })
}

/// Generates the panel described by `spec`. The same spec always
/// yields an identical panel.
pub fn generate(spec: &SynthSpec) -> Result<PricePanel> {
    spec.validate()?;
    let n = spec.n_instruments;
    let base = factor_blocks(&spec.blocks, spec.rho_out, n)?;
    let alt = match &spec.regime_switch {
        Some(switch) => Some(factor_blocks(&switch.blocks, spec.rho_out, n)?),
        None => None,
    };

    let dates = weekday_dates(spec.start_date, spec.n_days);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(spec.seed);
    let mut normal = NormalSampler::new();
    let mut z = vec![0.0; n];
    let mut closes: Vec<Vec<f64>> = Vec::with_capacity(spec.n_days);
    closes.push(vec![spec.start_price; n]);

    for step in 0..spec.n_days - 1 {
        for slot in z.iter_mut() {
            *slot = normal.sample(&mut rng);
        }
        let chol = match (&spec.regime_switch, &alt) {
            (Some(switch), Some(alt_chol)) if step / switch.window_days >= switch.at_window => {
                alt_chol
            }
            _ => &base,
        };
        let mut row = Vec::with_capacity(n);
        for i in 0..n {
            let mut shock = 0.0;
            for (k, zk) in z.iter().enumerate().take(i + 1) {
                shock += chol[i][k] * zk;
            }
            row.push(closes[step][i] * (spec.daily_vol * shock).exp());
        }
        closes.push(row);
    }
    PricePanel::from_observed(dates, spec.instrument_labels(), closes)
}
