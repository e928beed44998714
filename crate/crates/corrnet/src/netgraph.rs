//! Threshold networks and largest-cluster topology metrics.
//!
//! A threshold network links two instruments whenever their window
//! correlation meets or exceeds theta. All reported metrics (density,
//! characteristic path length, average clustering) are computed on the
//! largest connected cluster. Graphs are immutable after construction;
//! adjacency is kept as sorted neighbor lists.

use std::collections::BTreeSet;
use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::ingest::InstrumentId;

/// Which density formula to report. `Prose` is the realized fraction
/// of possible links, `2M/(N(N-1))`; `PaperLiteral` reports
/// `M/(N(N-1))`, half of that. Both stay available for comparison
/// against published figures, and every report records which one was
/// used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityConvention {
    #[serde(rename = "prose")]
    Prose,
    #[serde(rename = "paper")]
    PaperLiteral,
}

impl fmt::Display for DensityConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityConvention::Prose => f.write_str("prose"),
            DensityConvention::PaperLiteral => f.write_str("paper"),
        }
    }
}

/// Per-vertex clustering rule. `Paper` zeroes vertices with two or
/// fewer neighbors; `Standard` zeroes only vertices with fewer than
/// two, the conventional definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusteringRule {
    Paper,
    Standard,
}

/// Undirected graph over all matrix instruments at a threshold theta.
/// Isolated nodes are kept.
#[derive(Debug, Clone)]
pub struct ThresholdNetwork {
    theta: f64,
    window_label: String,
    nodes: Vec<InstrumentId>,
    neighbors: Vec<Vec<usize>>,
    edges: Vec<(usize, usize, f64)>,
}

impl ThresholdNetwork {
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn window_label(&self) -> &str {
        &self.window_label
    }

    pub fn nodes(&self) -> &[InstrumentId] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edge list as `(i, j, weight)` with `i < j` in node-index order.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Connected components as sorted node-index lists, ordered by
    /// first member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        let mut components = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(u) = queue.pop_front() {
                comp.push(u);
                for &v in &self.neighbors[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            components.push(comp);
        }
        components
    }
}

/// A connected component of a threshold network, carrying the parent
/// network's identity (window label and theta) plus the induced edges.
#[derive(Debug, Clone)]
pub struct Cluster {
    theta: f64,
    window_label: String,
    nodes: Vec<InstrumentId>,
    neighbors: Vec<Vec<usize>>,
    edges: Vec<(usize, usize, f64)>,
}

impl Cluster {
    /// Builds a cluster directly from labeled edges. Endpoints must be
    /// listed in `nodes`; self-loops and duplicate edges are rejected.
    /// Connectivity is not enforced here: [`largest_cluster`] output is
    /// connected by construction, and path-length reports `None` on a
    /// disconnected input.
    pub fn from_edge_list(
        window_label: impl Into<String>,
        theta: f64,
        nodes: Vec<InstrumentId>,
        edges: &[(InstrumentId, InstrumentId, f64)],
    ) -> Result<Self> {
        let index_of = |id: &InstrumentId| -> Result<usize> {
            nodes
                .iter()
                .position(|n| n == id)
                .ok_or_else(|| Error::InvalidConfig(format!("edge endpoint {id} is not a node")))
        };
        let mut seen = BTreeSet::new();
        let mut idx_edges = Vec::with_capacity(edges.len());
        for (a, b, w) in edges {
            let (mut i, mut j) = (index_of(a)?, index_of(b)?);
            if i == j {
                return Err(Error::InvalidConfig(format!("self-loop on {a}")));
            }
            if i > j {
                std::mem::swap(&mut i, &mut j);
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidConfig(format!("duplicate edge {a} -- {b}")));
            }
            idx_edges.push((i, j, *w));
        }
        idx_edges.sort_unstable_by_key(|e| (e.0, e.1));
        let neighbors = build_neighbors(nodes.len(), &idx_edges);
        Ok(Cluster {
            theta,
            window_label: window_label.into(),
            nodes,
            neighbors,
            edges: idx_edges,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn window_label(&self) -> &str {
        &self.window_label
    }

    pub fn nodes(&self) -> &[InstrumentId] {
        &self.nodes
    }

    /// Number of nodes, `N`.
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    /// Number of edges, `M`.
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Edges keyed by unordered label pair, for link matching across
    /// windows.
    pub fn edge_label_pairs(&self) -> BTreeSet<(String, String)> {
        self.edges
            .iter()
            .map(|&(i, j, _)| {
                let (a, b) = (self.nodes[i].to_string(), self.nodes[j].to_string());
                if a <= b {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect()
    }

    /// Fraction of realized links out of the maximum possible.
    /// `None` when the cluster has fewer than two nodes.
    pub fn density(&self, convention: DensityConvention) -> Option<f64> {
        let n = self.n();
        if n < 2 {
            return None;
        }
        let max_pairs = (n * (n - 1)) as f64;
        Some(match convention {
            DensityConvention::Prose => 2.0 * self.m() as f64 / max_pairs,
            DensityConvention::PaperLiteral => self.m() as f64 / max_pairs,
        })
    }

    /// Mean unweighted shortest-path hop count over all node pairs,
    /// via breadth-first search from every node. `None` when the
    /// cluster has fewer than two nodes or is not connected.
    pub fn characteristic_path_length(&self) -> Option<f64> {
        let n = self.n();
        if n < 2 {
            return None;
        }
        let mut total: u64 = 0;
        for source in 0..n {
            let dist = bfs_distances(&self.neighbors, source);
            for (v, d) in dist.iter().enumerate() {
                match d {
                    Some(hops) if v != source => total += u64::from(*hops),
                    None => return None,
                    _ => {}
                }
            }
        }
        Some(total as f64 / (n * (n - 1)) as f64)
    }

    /// Average of the per-vertex clustering coefficients over all
    /// cluster nodes.
    pub fn average_clustering(&self, rule: ClusteringRule) -> f64 {
        let n = self.n();
        if n == 0 {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 0..n {
            let deg = self.neighbors[i].len();
            let zero = match rule {
                ClusteringRule::Paper => deg <= 2,
                ClusteringRule::Standard => deg < 2,
            };
            if zero {
                continue;
            }
            let mut twice_links = 0usize;
            for &u in &self.neighbors[i] {
                twice_links += sorted_intersection_count(&self.neighbors[i], &self.neighbors[u]);
            }
            let links_between_neighbors = twice_links / 2;
            sum += 2.0 * links_between_neighbors as f64 / (deg * (deg - 1)) as f64;
        }
        sum / n as f64
    }
}

fn build_neighbors(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<usize>> {
    let mut neighbors = vec![Vec::new(); n];
    for &(i, j, _) in edges {
        neighbors[i].push(j);
        neighbors[j].push(i);
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    neighbors
}

fn bfs_distances(neighbors: &[Vec<usize>], source: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; neighbors.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].expect("queued nodes have a distance");
        for &v in &neighbors[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

fn sorted_intersection_count(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Links every pair whose correlation is greater than or equal to
/// theta. Every matrix instrument becomes a node, isolated or not.
pub fn build_threshold_network(corr: &CorrelationMatrix, theta: f64) -> Result<ThresholdNetwork> {
    if !(-1.0..=1.0).contains(&theta) {
        return Err(Error::InvalidConfig(format!(
            "theta {theta} outside [-1, 1]"
        )));
    }
    let n = corr.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let c = corr.get(i, j);
            if c >= theta {
                edges.push((i, j, c));
            }
        }
    }
    let neighbors = build_neighbors(n, &edges);
    Ok(ThresholdNetwork {
        theta,
        window_label: corr.window_label().to_string(),
        nodes: corr.instruments().to_vec(),
        neighbors,
        edges,
    })
}

/// The connected component with the most nodes; ties are broken in
/// favor of the component containing the lexicographically smallest
/// label, so the choice is deterministic.
pub fn largest_cluster(net: &ThresholdNetwork) -> Cluster {
    let components = net.components();
    let best = components
        .iter()
        .min_by(|a, b| {
            let min_a = a.iter().map(|&i| &net.nodes[i]).min().expect("non-empty");
            let min_b = b.iter().map(|&i| &net.nodes[i]).min().expect("non-empty");
            b.len().cmp(&a.len()).then_with(|| min_a.cmp(min_b))
        })
        .expect("a network has at least one component");

    let mut local = vec![usize::MAX; net.nodes.len()];
    for (new_idx, &old_idx) in best.iter().enumerate() {
        local[old_idx] = new_idx;
    }
    let nodes: Vec<InstrumentId> = best.iter().map(|&i| net.nodes[i].clone()).collect();
    let edges: Vec<(usize, usize, f64)> = net
        .edges
        .iter()
        .filter(|(i, _, _)| local[*i] != usize::MAX)
        .map(|&(i, j, w)| (local[i], local[j], w))
        .collect();
    let neighbors = build_neighbors(nodes.len(), &edges);
    Cluster {
        theta: net.theta,
        window_label: net.window_label.clone(),
        nodes,
        neighbors,
        edges,
    }
}

/// Totals over the whole network, reported alongside largest-cluster
/// metrics when requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalCounts {
    pub nodes: usize,
    pub edges: usize,
    pub components: usize,
}

/// Knobs for one metric evaluation.
#[derive(Debug, Clone, Copy)]
pub struct MetricConfig {
    pub theta: f64,
    pub convention: DensityConvention,
    pub rule: ClusteringRule,
    pub all_components: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            theta: 0.3,
            convention: DensityConvention::Prose,
            rule: ClusteringRule::Paper,
            all_components: false,
        }
    }
}

/// Largest-cluster metric bundle for one window at one theta.
#[derive(Debug, Clone)]
pub struct WindowReport {
    pub window_label: String,
    pub theta: f64,
    pub largest_cluster_size: usize,
    pub edge_count: usize,
    pub density: Option<f64>,
    pub path_length: Option<f64>,
    pub clustering: f64,
    pub convention: DensityConvention,
    pub global: Option<GlobalCounts>,
}

/// Builds the network, extracts the largest cluster, and bundles its
/// metrics.
pub fn window_report(corr: &CorrelationMatrix, config: &MetricConfig) -> Result<WindowReport> {
    let net = build_threshold_network(corr, config.theta)?;
    let cluster = largest_cluster(&net);
    Ok(report_from_cluster(&net, &cluster, config))
}

/// Metric bundle for an already-extracted largest cluster.
pub fn report_from_cluster(
    net: &ThresholdNetwork,
    cluster: &Cluster,
    config: &MetricConfig,
) -> WindowReport {
    WindowReport {
        window_label: cluster.window_label.clone(),
        theta: cluster.theta,
        largest_cluster_size: cluster.n(),
        edge_count: cluster.m(),
        density: cluster.density(config.convention),
        path_length: cluster.characteristic_path_length(),
        clustering: cluster.average_clustering(config.rule),
        convention: config.convention,
        global: config.all_components.then(|| GlobalCounts {
            nodes: net.n_nodes(),
            edges: net.n_edges(),
            components: net.components().len(),
        }),
    }
}
