//! Jaccard similarity between largest clusters across windows.
//!
//! Links are matched by unordered instrument-label pair, so two
//! clusters remain comparable even when their node sets differ. A
//! sharp drop in adjacent-window similarity marks a change of market
//! state.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::netgraph::Cluster;

/// W x W symmetric matrix of pairwise Jaccard similarities. `None`
/// marks pairs where both edge sets were empty and the ratio is
/// undefined.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    window_labels: Vec<String>,
    values: Vec<Vec<Option<f64>>>,
    theta: f64,
}

impl SimilarityMatrix {
    pub fn new(window_labels: Vec<String>, values: Vec<Vec<Option<f64>>>, theta: f64) -> Result<Self> {
        let w = window_labels.len();
        if values.len() != w || values.iter().any(|row| row.len() != w) {
            return Err(Error::InvalidConfig(
                "similarity matrix must be square over its windows".into(),
            ));
        }
        Ok(SimilarityMatrix {
            window_labels,
            values,
            theta,
        })
    }

    pub fn window_labels(&self) -> &[String] {
        &self.window_labels
    }

    pub fn w(&self) -> usize {
        self.window_labels.len()
    }

    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.values[a][b]
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Similarity of each window to its predecessor: entry `w` holds
    /// `J(w, w-1)` for `w` in `1..W`.
    pub fn adjacent(&self) -> Vec<Option<f64>> {
        (1..self.w()).map(|w| self.values[w][w - 1]).collect()
    }
}

fn jaccard_sets(a: &BTreeSet<(String, String)>, b: &BTreeSet<(String, String)>) -> Option<f64> {
    let shared = a.intersection(b).count();
    let total = a.len() + b.len();
    if total == 0 {
        return None; // both empty: 0/0 is undefined, not similar
    }
    // shared/(total - shared) equals |intersection|/|union| exactly
    Some(shared as f64 / (total - shared) as f64)
}

/// Jaccard index of two clusters' link sets: the number of links with
/// the same pair of nodes over the number of distinct links overall.
/// `None` when both clusters are edgeless.
pub fn jaccard(a: &Cluster, b: &Cluster) -> Option<f64> {
    jaccard_sets(&a.edge_label_pairs(), &b.edge_label_pairs())
}

/// All-pairs Jaccard matrix over the windows' largest clusters.
pub fn similarity_matrix(clusters: &[Cluster]) -> Result<SimilarityMatrix> {
    let w = clusters.len();
    if w < 2 {
        return Err(Error::TooFewRows {
            context: "similarity matrix".into(),
            have: w,
            need: 2,
        });
    }
    let sets: Vec<BTreeSet<(String, String)>> =
        clusters.iter().map(Cluster::edge_label_pairs).collect();
    let mut values = vec![vec![None; w]; w];
    for a in 0..w {
        for b in a..w {
            let j = jaccard_sets(&sets[a], &sets[b]);
            values[a][b] = j;
            values[b][a] = j;
        }
    }
    SimilarityMatrix::new(
        clusters.iter().map(|c| c.window_label().to_string()).collect(),
        values,
        clusters.first().map(Cluster::theta).unwrap_or(0.0),
    )
}

/// A window whose similarity to its predecessor fell below the drop
/// threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeFlag {
    pub window_label: String,
    pub adjacent_similarity: f64,
}

/// Flags window `w` when `J(w, w-1)` is below `drop` times the median
/// of all adjacent-pair similarities.
pub fn regime_flags(sim: &SimilarityMatrix, drop: f64) -> Result<Vec<RegimeFlag>> {
    if !(drop > 0.0 && drop < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "regime drop threshold {drop} outside (0, 1)"
        )));
    }
    if sim.w() < 2 {
        return Err(Error::TooFewRows {
            context: "regime flags".into(),
            have: sim.w(),
            need: 2,
        });
    }
    let adjacent = sim.adjacent();
    let mut present: Vec<f64> = adjacent.iter().flatten().copied().collect();
    if present.is_empty() {
        return Ok(Vec::new());
    }
    present.sort_by(|a, b| a.partial_cmp(b).expect("similarities are finite"));
    let mid = present.len() / 2;
    let median = if present.len() % 2 == 1 {
        present[mid]
    } else {
        0.5 * (present[mid - 1] + present[mid])
    };

    let mut flags = Vec::new();
    for (offset, value) in adjacent.iter().enumerate() {
        if let Some(j) = value {
            if *j < drop * median {
                flags.push(RegimeFlag {
                    window_label: sim.window_labels()[offset + 1].clone(),
                    adjacent_similarity: *j,
                });
            }
        }
    }
    Ok(flags)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::ingest::InstrumentId;
    use crate::synth::rng::Xoshiro256PlusPlus;

    fn cluster(label: &str, edges: &[(&str, &str)]) -> Cluster {
        let mut nodes: Vec<String> = edges
            .iter()
            .flat_map(|(a, b)| [a.to_string(), b.to_string()])
            .collect();
        nodes.sort();
        nodes.dedup();
        let node_ids: Vec<InstrumentId> = nodes.iter().map(InstrumentId::new).collect();
        let labeled: Vec<(InstrumentId, InstrumentId, f64)> = edges
            .iter()
            .map(|(a, b)| (InstrumentId::new(*a), InstrumentId::new(*b), 1.0))
            .collect();
        Cluster::from_edge_list(label, 0.3, node_ids, &labeled).unwrap()
    }

    fn edgeless(label: &str) -> Cluster {
        Cluster::from_edge_list(label, 0.3, vec![InstrumentId::new("x")], &[]).unwrap()
    }

    #[test]
    fn identical_edge_sets_have_unit_similarity() {
        let a = cluster("w0", &[("a", "b"), ("b", "c"), ("c", "d")]);
        let b = cluster("w1", &[("a", "b"), ("b", "c"), ("c", "d")]);
        assert_eq!(jaccard(&a, &b), Some(1.0));
    }

    #[test]
    fn disjoint_edge_sets_have_zero_similarity() {
        let a = cluster("w0", &[("a", "b")]);
        let b = cluster("w1", &[("c", "d")]);
        assert_eq!(jaccard(&a, &b), Some(0.0));
    }

    #[test]
    fn one_shared_of_three_distinct_links_gives_one_third() {
        let a = cluster("w0", &[("a", "b"), ("b", "c")]);
        let b = cluster("w1", &[("a", "b"), ("c", "d")]);
        // shared 1, total 4 -> 1/(4-1)
        assert_relative_eq!(jaccard(&a, &b).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn both_empty_is_undefined_not_zero() {
        assert_eq!(jaccard(&edgeless("w0"), &edgeless("w1")), None);
    }

    #[test]
    fn empty_versus_nonempty_is_zero() {
        let a = cluster("w0", &[("a", "b")]);
        assert_eq!(jaccard(&a, &edgeless("w1")), Some(0.0));
    }

    #[test]
    fn self_similarity_is_exactly_one() {
        let a = cluster("w0", &[("a", "b"), ("c", "d"), ("a", "d")]);
        assert_eq!(jaccard(&a, &a), Some(1.0));
    }

    #[test]
    fn edge_matching_uses_labels_not_node_positions() {
        // same link set expressed over different node orderings
        let a = cluster("w0", &[("b", "a")]);
        let b = cluster("w1", &[("a", "b")]);
        assert_eq!(jaccard(&a, &b), Some(1.0));
    }

    #[test]
    fn ratio_identity_holds_in_integers_for_random_sets() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1618);
        let universe: Vec<(String, String)> = (0..8)
            .flat_map(|i| ((i + 1)..8).map(move |j| (format!("n{i}"), format!("n{j}"))))
            .collect();
        for _ in 0..200 {
            let pick = |rng: &mut Xoshiro256PlusPlus| -> BTreeSet<(String, String)> {
                universe
                    .iter()
                    .filter(|_| rng.next_f64() < 0.4)
                    .cloned()
                    .collect()
            };
            let sa = pick(&mut rng);
            let sb = pick(&mut rng);
            let shared = sa.intersection(&sb).count();
            let union = sa.union(&sb).count();
            let total = sa.len() + sb.len();
            if total == 0 {
                assert_eq!(jaccard_sets(&sa, &sb), None);
                continue;
            }
            // the two denominators coincide in integers, so
            // N1/(N - N1) and |intersection|/|union| are the same ratio
            assert_eq!(union, total - shared);
            let j = jaccard_sets(&sa, &sb).unwrap();
            let j_swapped = jaccard_sets(&sb, &sa).unwrap();
            assert_eq!(j.to_bits(), j_swapped.to_bits());
            assert!((0.0..=1.0).contains(&j));
            assert_eq!(j, shared as f64 / union as f64);
        }
    }

    #[test]
    fn removing_a_common_edge_never_raises_similarity() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(42);
        for _ in 0..100 {
            let universe: Vec<(String, String)> = (0..7)
                .flat_map(|i| ((i + 1)..7).map(move |j| (format!("n{i}"), format!("n{j}"))))
                .collect();
            let sa: BTreeSet<(String, String)> = universe
                .iter()
                .filter(|_| rng.next_f64() < 0.5)
                .cloned()
                .collect();
            let sb: BTreeSet<(String, String)> = universe
                .iter()
                .filter(|_| rng.next_f64() < 0.5)
                .cloned()
                .collect();
            let common: Vec<_> = sa.intersection(&sb).cloned().collect();
            if common.is_empty() || sa.len() + sb.len() == 0 {
                continue;
            }
            let before = jaccard_sets(&sa, &sb).unwrap();
            let mut sa_smaller = sa.clone();
            sa_smaller.remove(&common[0]);
            if sa_smaller.len() + sb.len() == 0 {
                continue;
            }
            let after = jaccard_sets(&sa_smaller, &sb).unwrap();
            assert!(after <= before + 1e-15);
        }
    }

    #[test]
    fn identical_windows_give_all_ones_matrix() {
        let clusters: Vec<Cluster> = (0..4)
            .map(|w| cluster(&format!("w{w}"), &[("a", "b"), ("b", "c")]))
            .collect();
        let sim = similarity_matrix(&clusters).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(sim.get(a, b), Some(1.0));
            }
        }
    }

    #[test]
    fn pairwise_disjoint_windows_give_identity_like_matrix() {
        let clusters = vec![
            cluster("w0", &[("a", "b")]),
            cluster("w1", &[("c", "d")]),
            cluster("w2", &[("e", "f")]),
        ];
        let sim = similarity_matrix(&clusters).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let expected = if a == b { Some(1.0) } else { Some(0.0) };
                assert_eq!(sim.get(a, b), expected);
            }
        }
    }

    #[test]
    fn single_window_is_an_error() {
        let clusters = vec![cluster("w0", &[("a", "b")])];
        assert!(similarity_matrix(&clusters).is_err());
    }

    #[test]
    fn flag_fires_after_similarity_gap() {
        // adjacent similarities 0.6, 0.6, 0.1, 0.6 over five windows
        let labels: Vec<String> = (0..5).map(|w| format!("w{w}")).collect();
        let adj = [0.6, 0.6, 0.1, 0.6];
        let mut values = vec![vec![Some(1.0); 5]; 5];
        for (k, j) in adj.iter().enumerate() {
            values[k][k + 1] = Some(*j);
            values[k + 1][k] = Some(*j);
        }
        let sim = SimilarityMatrix::new(labels, values, 0.3).unwrap();
        let flags = regime_flags(&sim, 0.5).unwrap();
        assert_eq!(flags.len(), 1);
        assert_eq!(flags[0].window_label, "w3");
        assert_relative_eq!(flags[0].adjacent_similarity, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn constant_similarities_raise_no_flags() {
        let clusters: Vec<Cluster> = (0..4)
            .map(|w| cluster(&format!("w{w}"), &[("a", "b")]))
            .collect();
        let sim = similarity_matrix(&clusters).unwrap();
        assert!(regime_flags(&sim, 0.5).unwrap().is_empty());
    }

    #[test]
    fn drop_threshold_is_validated() {
        let clusters: Vec<Cluster> = (0..2)
            .map(|w| cluster(&format!("w{w}"), &[("a", "b")]))
            .collect();
        let sim = similarity_matrix(&clusters).unwrap();
        assert!(regime_flags(&sim, 0.0).is_err());
        assert!(regime_flags(&sim, 1.0).is_err());
    }
}
