//! Correlation networks from daily closing prices.
//!
//! `corrnet` turns panels of daily closes into windowed Pearson
//! correlation matrices, threshold networks, per-window topology
//! metrics (density, characteristic path length, average clustering
//! coefficient), and a window-by-window Jaccard similarity matrix used
//! to detect market-state changes. A deterministic synthetic generator
//! provides ground-truth panels so the whole pipeline can be exercised
//! without proprietary market data.
//!
//! The crate is organized along the pipeline:
//! [`ingest`] parses and aligns price files and slices windows,
//! [`returns`] computes log returns, volatility, and normalization,
//! [`correlation`] builds the per-window Pearson matrix,
//! [`netgraph`] builds threshold networks and topology metrics,
//! [`similarity`] compares largest clusters across windows,
//! [`synth`] generates deterministic test panels, and
//! [`pipeline`] orchestrates a full run with stable artifact output.

pub mod correlation;
pub mod error;
pub mod export;
pub mod ingest;
pub mod netgraph;
mod numeric;
pub mod pipeline;
pub mod returns;
pub mod similarity;
pub mod synth;

pub use correlation::{correlation_matrix, mean_correlation, CorrelationMatrix};
pub use error::{Error, Result};
pub use ingest::{
    align_calendars, parse_prices, slice_windows, FillPolicy, InstrumentId, Layout, PricePanel,
    WindowMode, WindowSlice, WindowSpec,
};
pub use netgraph::{
    build_threshold_network, largest_cluster, window_report, Cluster, ClusteringRule,
    DensityConvention, MetricConfig, ThresholdNetwork, WindowReport,
};
pub use pipeline::{render_summary, run_pipeline, RunConfig, RunOutcome};
pub use returns::{
    log_returns, normalize, volatility, NormalizedReturnPanel, ReturnPanel, VolatilityReport,
};
pub use similarity::{jaccard, regime_flags, similarity_matrix, RegimeFlag, SimilarityMatrix};
pub use synth::{generate, SynthSpec};
