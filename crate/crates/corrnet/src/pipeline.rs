//! End-to-end pipeline: ingest, returns, correlation, networks,
//! similarity, and deterministic artifact output.
//!
//! Windows are processed by a worker pool; artifact bytes are
//! assembled and written serially afterwards, so output is identical
//! whatever the worker count. The output directory is populated as a
//! `.partial` sibling and renamed into place only when every artifact
//! has been written.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correlation::{correlation_matrix, mean_correlation, CorrelationMatrix};
use crate::error::{Error, Result};
use crate::export;
use crate::ingest::{
    align_calendars, parse_prices, slice_windows, FillPolicy, InstrumentId, Layout, WindowSlice,
    WindowSpec, DEFAULT_MIN_DAYS,
};
use crate::netgraph::{
    build_threshold_network, largest_cluster, report_from_cluster, Cluster, ClusteringRule,
    DensityConvention, MetricConfig, WindowReport,
};
use crate::returns::{normalize, volatility, window_log_returns, VolatilityReport, DEFAULT_SIGMA_FLOOR};
use crate::similarity::{regime_flags, similarity_matrix, RegimeFlag, SimilarityMatrix};

/// Environment variable overriding the worker count.
pub const THREADS_ENV_VAR: &str = "CORRNET_THREADS";

/// Which artifact families a run writes. The manifest is always
/// written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmitFlags {
    pub volatility: bool,
    pub correlation: bool,
    pub networks: bool,
    pub metrics: bool,
    pub similarity: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        EmitFlags {
            volatility: true,
            correlation: true,
            networks: true,
            metrics: true,
            similarity: true,
        }
    }
}

/// Full configuration of one `run` invocation. A JSON config file
/// deserializes into this; CLI flags override individual fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub layout: Layout,
    pub fill: FillPolicy,
    pub window: WindowSpec,
    pub thetas: Vec<f64>,
    pub density_convention: DensityConvention,
    pub clustering_rule: ClusteringRule,
    pub all_components: bool,
    /// Optional file with one instrument label per line; the panel is
    /// restricted to those instruments.
    pub subset: Option<PathBuf>,
    pub regime_drop: f64,
    pub sigma_floor: f64,
    pub out_dir: PathBuf,
    pub emit: EmitFlags,
    /// Worker count; `None` uses the available parallelism. The
    /// `CORRNET_THREADS` environment variable overrides both.
    pub threads: Option<usize>,
    /// Replace an existing output directory.
    pub force: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: PathBuf::new(),
            layout: Layout::Long,
            fill: FillPolicy::ForwardFill,
            window: WindowSpec::calendar_year(DEFAULT_MIN_DAYS),
            thetas: vec![0.3],
            density_convention: DensityConvention::Prose,
            clustering_rule: ClusteringRule::Paper,
            all_components: false,
            subset: None,
            regime_drop: 0.5,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            out_dir: PathBuf::new(),
            emit: EmitFlags::default(),
            threads: None,
            force: false,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("input path is required".into()));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("output directory is required".into()));
        }
        if self.thetas.is_empty() {
            return Err(Error::InvalidConfig("theta list must be non-empty".into()));
        }
        for &theta in &self.thetas {
            if !theta.is_finite() || !(-1.0..=1.0).contains(&theta) {
                return Err(Error::InvalidConfig(format!("theta {theta} outside [-1, 1]")));
            }
        }
        if !(self.regime_drop > 0.0 && self.regime_drop < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "regime drop {} outside (0, 1)",
                self.regime_drop
            )));
        }
        if !(self.sigma_floor.is_finite() && self.sigma_floor > 0.0) {
            return Err(Error::InvalidConfig("sigma floor must be positive".into()));
        }
        self.window.validate()
    }

    fn metric_config(&self, theta: f64) -> MetricConfig {
        MetricConfig {
            theta,
            convention: self.density_convention,
            rule: self.clustering_rule,
            all_components: self.all_components,
        }
    }
}

/// Analytic parameters echoed into the manifest. Execution details
/// (worker count, output location, force flag) are deliberately
/// absent so reruns of the same analysis produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticParameters {
    pub input: String,
    pub layout: Layout,
    pub fill: FillPolicy,
    pub window: WindowSpec,
    pub thetas: Vec<f64>,
    pub density_convention: DensityConvention,
    pub clustering_rule: ClusteringRule,
    pub all_components: bool,
    pub subset: Option<String>,
    pub regime_drop: f64,
    pub sigma_floor: f64,
}

/// One artifact class; the manifest groups files by what they carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Volatility,
    Correlation,
    Network,
    Metrics,
    Similarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub kind: ArtifactKind,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub parameters: AnalyticParameters,
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    pub fn kinds(&self) -> Vec<ArtifactKind> {
        let mut kinds: Vec<ArtifactKind> = self.artifacts.iter().map(|a| a.kind).collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }
}

/// One summary row: largest-cluster metrics plus the similarity to
/// the previous window at the same theta.
#[derive(Debug, Clone)]
pub struct WindowSummary {
    pub window_label: String,
    pub theta: f64,
    pub largest_cluster_size: usize,
    pub edge_count: usize,
    pub density: Option<f64>,
    pub path_length: Option<f64>,
    pub clustering: f64,
    pub mean_correlation: f64,
    pub jaccard_prev: Option<f64>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub summaries: Vec<WindowSummary>,
    pub warnings: Vec<String>,
    pub out_dir: PathBuf,
}

struct WindowComputation {
    volatility: VolatilityReport,
    mean_correlation: f64,
    corr: CorrelationMatrix,
    excluded: Vec<InstrumentId>,
    per_theta: Vec<(WindowReport, Cluster)>,
}

fn compute_window(slice: &WindowSlice, config: &RunConfig) -> Result<WindowComputation> {
    let returns = window_log_returns(slice)?;
    let vol = volatility(&returns)?;
    let normalized = normalize(&returns, config.sigma_floor)?;
    let corr = correlation_matrix(&normalized)?;
    let mean = mean_correlation(&corr)?;
    let per_theta = config
        .thetas
        .iter()
        .map(|&theta| {
            let net = build_threshold_network(&corr, theta)?;
            let cluster = largest_cluster(&net);
            let report = report_from_cluster(&net, &cluster, &config.metric_config(theta));
            Ok((report, cluster))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WindowComputation {
        volatility: vol,
        mean_correlation: mean,
        corr,
        excluded: normalized.excluded.clone(),
        per_theta,
    })
}

fn read_subset_file(path: &Path) -> Result<Vec<InstrumentId>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let labels: Vec<InstrumentId> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(InstrumentId::new)
        .collect();
    if labels.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "subset file {} lists no instruments",
            path.display()
        )));
    }
    Ok(labels)
}

fn theta_suffix(thetas: &[f64], theta: f64) -> String {
    if thetas.len() == 1 {
        String::new()
    } else {
        format!("_t{}", export::fmt_theta(theta))
    }
}

fn worker_pool(config: &RunConfig) -> Result<rayon::ThreadPool> {
    let env_threads = std::env::var(THREADS_ENV_VAR)
        .ok()
        .map(|raw| {
            raw.parse::<usize>().map_err(|_| {
                Error::InvalidConfig(format!("{THREADS_ENV_VAR}={raw} is not a worker count"))
            })
        })
        .transpose()?;
    let threads = env_threads.or(config.threads).unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))
}

/// Runs the full pipeline and writes all artifacts atomically into
/// `config.out_dir`.
pub fn run_pipeline(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    if config.out_dir.exists() && !config.force {
        return Err(Error::OutputExists(config.out_dir.display().to_string()));
    }

    let text = fs::read_to_string(&config.input)
        .map_err(|e| Error::io(config.input.display().to_string(), e))?;
    let raw = parse_prices(&text, config.layout)?;
    let (mut panel, mut warnings) = align_calendars(&raw, config.fill)?;

    if let Some(subset_path) = &config.subset {
        let labels = read_subset_file(subset_path)?;
        for label in &labels {
            if !panel.instruments().contains(label) {
                warnings.push(format!("subset instrument {label} not present in panel"));
            }
        }
        panel = panel.subset(&labels)?;
    }

    let (windows, window_warnings) = slice_windows(&panel, &config.window)?;
    warnings.extend(window_warnings);

    let pool = worker_pool(config)?;
    let computed: Vec<WindowComputation> = pool.install(|| {
        windows
            .par_iter()
            .map(|slice| compute_window(slice, config))
            .collect::<Result<Vec<_>>>()
    })?;

    for (slice, comp) in windows.iter().zip(&computed) {
        if !comp.excluded.is_empty() {
            let labels: Vec<&str> = comp.excluded.iter().map(InstrumentId::as_str).collect();
            warnings.push(format!(
                "window {}: excluded zero-variance instruments: {}",
                slice.label,
                labels.join(", ")
            ));
        }
    }

    // cross-window similarity per theta
    let mut similarities: Vec<Option<(SimilarityMatrix, Vec<RegimeFlag>)>> = Vec::new();
    for (ti, _) in config.thetas.iter().enumerate() {
        if computed.len() < 2 {
            similarities.push(None);
            continue;
        }
        let clusters: Vec<Cluster> = computed.iter().map(|c| c.per_theta[ti].1.clone()).collect();
        let sim = similarity_matrix(&clusters)?;
        let flags = regime_flags(&sim, config.regime_drop)?;
        similarities.push(Some((sim, flags)));
    }
    if computed.len() < 2 {
        warnings.push("similarity skipped: need at least two windows".into());
    }

    let artifacts = assemble_artifacts(config, &computed, &similarities);
    let manifest = build_manifest(config, &artifacts);
    write_output(&config.out_dir, config.force, &artifacts, &manifest)?;

    let summaries = build_summaries(config, &computed, &similarities);
    Ok(RunOutcome {
        manifest,
        summaries,
        warnings,
        out_dir: config.out_dir.clone(),
    })
}

fn assemble_artifacts(
    config: &RunConfig,
    computed: &[WindowComputation],
    similarities: &[Option<(SimilarityMatrix, Vec<RegimeFlag>)>],
) -> Vec<(String, ArtifactKind, String)> {
    let mut artifacts: Vec<(String, ArtifactKind, String)> = Vec::new();

    if config.emit.volatility {
        let reports: Vec<VolatilityReport> =
            computed.iter().map(|c| c.volatility.clone()).collect();
        artifacts.push((
            "volatility.csv".into(),
            ArtifactKind::Volatility,
            export::volatility_csv(&reports),
        ));
    }

    if config.emit.correlation {
        let means: Vec<(String, f64)> = computed
            .iter()
            .map(|c| (c.corr.window_label().to_string(), c.mean_correlation))
            .collect();
        artifacts.push((
            "mean_correlation.csv".into(),
            ArtifactKind::Correlation,
            export::mean_correlation_csv(&means),
        ));
        for comp in computed {
            artifacts.push((
                format!("corr_{}.csv", comp.corr.window_label()),
                ArtifactKind::Correlation,
                export::correlation_csv(&comp.corr),
            ));
        }
    }

    if config.emit.networks {
        for comp in computed {
            for (ti, &theta) in config.thetas.iter().enumerate() {
                let cluster = &comp.per_theta[ti].1;
                let suffix = theta_suffix(&config.thetas, theta);
                let stem = format!("network_{}{}", cluster.window_label(), suffix);
                artifacts.push((
                    format!("{stem}.dot"),
                    ArtifactKind::Network,
                    export::cluster_to_dot(cluster),
                ));
                artifacts.push((
                    format!("{stem}.graphml"),
                    ArtifactKind::Network,
                    export::cluster_to_graphml(cluster),
                ));
            }
        }
    }

    if config.emit.metrics {
        let reports: Vec<WindowReport> = computed
            .iter()
            .flat_map(|c| c.per_theta.iter().map(|(r, _)| r.clone()))
            .collect();
        artifacts.push((
            "metrics.csv".into(),
            ArtifactKind::Metrics,
            export::metrics_csv(&reports),
        ));
    }

    if config.emit.similarity {
        for (ti, &theta) in config.thetas.iter().enumerate() {
            if let Some((sim, flags)) = &similarities[ti] {
                let suffix = theta_suffix(&config.thetas, theta);
                artifacts.push((
                    format!("jaccard{suffix}.csv"),
                    ArtifactKind::Similarity,
                    export::jaccard_csv(sim),
                ));
                artifacts.push((
                    format!("regime_flags{suffix}.txt"),
                    ArtifactKind::Similarity,
                    export::regime_flags_txt(flags),
                ));
            }
        }
    }

    artifacts.sort_by(|a, b| a.0.cmp(&b.0));
    artifacts
}

fn build_manifest(config: &RunConfig, artifacts: &[(String, ArtifactKind, String)]) -> Manifest {
    let entries = artifacts
        .iter()
        .map(|(path, kind, content)| ArtifactEntry {
            path: path.clone(),
            kind: *kind,
            bytes: content.len() as u64,
            sha256: hex::encode(Sha256::digest(content.as_bytes())),
        })
        .collect();
    Manifest {
        tool: format!("corrnet {}", env!("CARGO_PKG_VERSION")),
        parameters: AnalyticParameters {
            input: config.input.display().to_string(),
            layout: config.layout,
            fill: config.fill,
            window: config.window,
            thetas: config.thetas.clone(),
            density_convention: config.density_convention,
            clustering_rule: config.clustering_rule,
            all_components: config.all_components,
            subset: config.subset.as_ref().map(|p| p.display().to_string()),
            regime_drop: config.regime_drop,
            sigma_floor: config.sigma_floor,
        },
        artifacts: entries,
    }
}

fn write_output(
    out_dir: &Path,
    force: bool,
    artifacts: &[(String, ArtifactKind, String)],
    manifest: &Manifest,
) -> Result<()> {
    let dir_name = out_dir
        .file_name()
        .ok_or_else(|| Error::InvalidConfig("output directory has no name".into()))?;
    let mut partial_name = dir_name.to_os_string();
    partial_name.push(".partial");
    let partial = out_dir.with_file_name(partial_name);

    let write_all = || -> Result<()> {
        fs::create_dir_all(&partial).map_err(|e| Error::io(partial.display().to_string(), e))?;
        for (path, _, content) in artifacts {
            let full = partial.join(path);
            fs::write(&full, content).map_err(|e| Error::io(full.display().to_string(), e))?;
        }
        let manifest_path = partial.join("manifest.json");
        fs::write(&manifest_path, manifest.to_json())
            .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
        if out_dir.exists() {
            if !force {
                return Err(Error::OutputExists(out_dir.display().to_string()));
            }
            fs::remove_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
        }
        fs::rename(&partial, out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))
    };

    if partial.exists() {
        fs::remove_dir_all(&partial).map_err(|e| Error::io(partial.display().to_string(), e))?;
    }
    let result = write_all();
    if result.is_err() && partial.exists() {
        let _ = fs::remove_dir_all(&partial);
    }
    result
}

fn build_summaries(
    config: &RunConfig,
    computed: &[WindowComputation],
    similarities: &[Option<(SimilarityMatrix, Vec<RegimeFlag>)>],
) -> Vec<WindowSummary> {
    let mut summaries = Vec::new();
    for (ti, &theta) in config.thetas.iter().enumerate() {
        let adjacent = similarities[ti].as_ref().map(|(sim, _)| sim.adjacent());
        for (wi, comp) in computed.iter().enumerate() {
            let report = &comp.per_theta[ti].0;
            let jaccard_prev = match (&adjacent, wi) {
                (Some(adj), w) if w > 0 => adj[w - 1],
                _ => None,
            };
            summaries.push(WindowSummary {
                window_label: report.window_label.clone(),
                theta,
                largest_cluster_size: report.largest_cluster_size,
                edge_count: report.edge_count,
                density: report.density,
                path_length: report.path_length,
                clustering: report.clustering,
                mean_correlation: comp.mean_correlation,
                jaccard_prev,
            });
        }
    }
    summaries
}

/// Renders the per-window summary table. The similarity column is
/// present only when a run produced at least two windows.
pub fn render_summary(outcome: &RunOutcome) -> String {
    let with_jaccard = outcome.summaries.iter().any(|s| s.jaccard_prev.is_some());
    let mut header = vec![
        "window".to_string(),
        "theta".to_string(),
        "N".to_string(),
        "M".to_string(),
        "density".to_string(),
        "path_len".to_string(),
        "clustering".to_string(),
        "mean_corr".to_string(),
    ];
    if with_jaccard {
        header.push("J_prev".to_string());
    }
    let mut rows = vec![header];
    for s in &outcome.summaries {
        let opt = |x: Option<f64>| x.map(export::fmt_frac).unwrap_or_else(|| "-".into());
        let mut row = vec![
            s.window_label.clone(),
            export::fmt_theta(s.theta),
            s.largest_cluster_size.to_string(),
            s.edge_count.to_string(),
            opt(s.density),
            opt(s.path_length),
            export::fmt_frac(s.clustering),
            export::fmt_frac(s.mean_correlation),
        ];
        if with_jaccard {
            row.push(opt(s.jaccard_prev));
        }
        rows.push(row);
    }

    let columns = rows[0].len();
    let widths: Vec<usize> = (0..columns)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:<width$}", width = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Recomputes `metrics.csv` content from the `corr_<window>.csv`
/// files of a saved run directory.
pub fn recompute_metrics(
    dir: &Path,
    thetas: &[f64],
    convention: DensityConvention,
    rule: ClusteringRule,
    all_components: bool,
) -> Result<String> {
    let mut matrices = Vec::new();
    for path in sorted_dir_entries(dir)? {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(label) = name.strip_prefix("corr_").and_then(|n| n.strip_suffix(".csv")) {
            let text =
                fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
            matrices.push(export::parse_correlation_csv(&text, label)?);
        }
    }
    if matrices.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no corr_<window>.csv files under {}",
            dir.display()
        )));
    }
    let mut reports = Vec::new();
    for corr in &matrices {
        for &theta in thetas {
            let config = MetricConfig {
                theta,
                convention,
                rule,
                all_components,
            };
            reports.push(crate::netgraph::window_report(corr, &config)?);
        }
    }
    Ok(export::metrics_csv(&reports))
}

/// Recomputes the Jaccard matrix and regime flags from the
/// `network_<window>.dot` files of a saved run directory. When the
/// directory holds networks for several thetas, `theta` selects one.
pub fn recompute_jaccard(
    dir: &Path,
    theta: Option<f64>,
    regime_drop: f64,
) -> Result<(String, String)> {
    let mut groups: BTreeMap<String, Vec<Cluster>> = BTreeMap::new();
    for path in sorted_dir_entries(dir)? {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("network_") && name.ends_with(".dot") {
            let text =
                fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
            let cluster = export::parse_dot_cluster(&text)?;
            groups
                .entry(export::fmt_theta(cluster.theta()))
                .or_default()
                .push(cluster);
        }
    }
    if groups.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no network_<window>.dot files under {}",
            dir.display()
        )));
    }
    let clusters = match theta {
        Some(t) => groups
            .remove(&export::fmt_theta(t))
            .ok_or_else(|| Error::InvalidConfig(format!("no networks for theta {t}")))?,
        None if groups.len() == 1 => groups.into_values().next().expect("one group"),
        None => {
            let available: Vec<String> = groups.keys().cloned().collect();
            return Err(Error::InvalidConfig(format!(
                "networks for several thetas found ({}); pass --theta",
                available.join(", ")
            )));
        }
    };
    let mut clusters = clusters;
    clusters.sort_by(|a, b| a.window_label().cmp(b.window_label()));
    let sim = similarity_matrix(&clusters)?;
    let flags = regime_flags(&sim, regime_drop)?;
    Ok((export::jaccard_csv(&sim), export::regime_flags_txt(&flags)))
}

fn sorted_dir_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut paths: Vec<PathBuf> = entries
        .map(|entry| entry.map(|e| e.path()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::io(dir.display().to_string(), e))?;
    paths.sort();
    Ok(paths)
}
