//! Artifact formatting and parsing.
//!
//! Numeric formatting is frozen so artifact bytes are stable across
//! runs and platforms: correlation-grade values carry nine significant
//! digits, similarity-grade values six decimals, both with Rust's
//! round-half-even float formatting. The parsers read back the
//! artifacts this module writes, for the recompute subcommands.

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::ingest::{InstrumentId, PricePanel};
use crate::netgraph::{Cluster, WindowReport};
use crate::returns::VolatilityReport;
use crate::similarity::{RegimeFlag, SimilarityMatrix};

/// Correlation-grade formatting: nine significant digits.
pub fn fmt_corr(x: f64) -> String {
    format!("{x:.8e}")
}

/// Similarity- and metric-grade formatting: six decimals.
pub fn fmt_frac(x: f64) -> String {
    format!("{x:.6}")
}

fn fmt_opt_frac(x: Option<f64>) -> String {
    x.map(fmt_frac).unwrap_or_default()
}

/// Theta is echoed with the shortest round-trip formatting so the
/// printed value parses back to the identical float.
pub fn fmt_theta(theta: f64) -> String {
    format!("{theta}")
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish_csv(writer: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(writer.into_inner().expect("in-memory csv writer"))
        .expect("csv output is utf-8")
}

/// `volatility.csv`: per-window instrument volatilities plus a
/// `__MEAN__` row with the cross-sectional mean.
pub fn volatility_csv(reports: &[VolatilityReport]) -> String {
    let mut w = csv_writer();
    w.write_record(["window", "instrument", "v"]).expect("csv record");
    for report in reports {
        for (id, v) in &report.per_index {
            w.write_record([&report.window_label, id.as_str(), &fmt_corr(*v)])
                .expect("csv record");
        }
        w.write_record([
            &report.window_label,
            "__MEAN__",
            &fmt_corr(report.cross_sectional_mean),
        ])
        .expect("csv record");
    }
    finish_csv(w)
}

/// `mean_correlation.csv`: one row per window.
pub fn mean_correlation_csv(rows: &[(String, f64)]) -> String {
    let mut w = csv_writer();
    w.write_record(["window", "mean"]).expect("csv record");
    for (label, mean) in rows {
        w.write_record([label.as_str(), &fmt_corr(*mean)]).expect("csv record");
    }
    finish_csv(w)
}

/// `corr_<window>.csv`: square matrix with instrument labels on both
/// axes.
pub fn correlation_csv(corr: &CorrelationMatrix) -> String {
    let mut w = csv_writer();
    let mut header = vec![String::new()];
    header.extend(corr.instruments().iter().map(|id| id.to_string()));
    w.write_record(&header).expect("csv record");
    for (i, id) in corr.instruments().iter().enumerate() {
        let mut row = vec![id.to_string()];
        row.extend((0..corr.n()).map(|j| fmt_corr(corr.get(i, j))));
        w.write_record(&row).expect("csv record");
    }
    finish_csv(w)
}

/// Reads back a matrix written by [`correlation_csv`].
pub fn parse_correlation_csv(text: &str, window_label: &str) -> Result<CorrelationMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or(Error::EmptyInput)?
        .map_err(|e| Error::MalformedRow { line: 1, reason: e.to_string() })?;
    if header.is_empty() || !header[0].is_empty() {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "correlation header must start with an empty cell".into(),
        });
    }
    let labels: Vec<InstrumentId> = header.iter().skip(1).map(InstrumentId::new).collect();
    let n = labels.len();
    let mut values = Vec::with_capacity(n);
    for (i, record) in records.enumerate() {
        let record = record.map_err(|e| Error::MalformedRow { line: 0, reason: e.to_string() })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != n + 1 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", n + 1, record.len()),
            });
        }
        if record[0] != *labels[i].as_str() {
            return Err(Error::MalformedRow {
                line,
                reason: format!("row label {:?} does not match column {:?}", &record[0], labels[i]),
            });
        }
        let row: Vec<f64> = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::MalformedRow {
                    line,
                    reason: format!("value {f:?} is not a number"),
                })
            })
            .collect::<Result<_>>()?;
        values.push(row);
    }
    if values.len() != n {
        return Err(Error::MalformedRow {
            line: 0,
            reason: format!("expected {n} data rows, found {}", values.len()),
        });
    }
    CorrelationMatrix::new(labels, values, window_label)
}

/// `metrics.csv`: one row per (window, theta). The global columns are
/// present only when the run asked for all-components reporting.
pub fn metrics_csv(reports: &[WindowReport]) -> String {
    let with_global = reports.iter().any(|r| r.global.is_some());
    let mut w = csv_writer();
    let mut header = vec![
        "window", "theta", "N", "M", "density", "path_length", "clustering", "convention",
    ];
    if with_global {
        header.extend(["total_nodes", "total_edges", "components"]);
    }
    w.write_record(&header).expect("csv record");
    for r in reports {
        let mut row = vec![
            r.window_label.clone(),
            fmt_theta(r.theta),
            r.largest_cluster_size.to_string(),
            r.edge_count.to_string(),
            fmt_opt_frac(r.density),
            fmt_opt_frac(r.path_length),
            fmt_frac(r.clustering),
            r.convention.to_string(),
        ];
        if with_global {
            match &r.global {
                Some(g) => row.extend([
                    g.nodes.to_string(),
                    g.edges.to_string(),
                    g.components.to_string(),
                ]),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        w.write_record(&row).expect("csv record");
    }
    finish_csv(w)
}

/// `jaccard.csv`: W x W matrix with window labels on both axes; empty
/// cells mark undefined (both-empty) pairs.
pub fn jaccard_csv(sim: &SimilarityMatrix) -> String {
    let mut w = csv_writer();
    let mut header = vec!["window".to_string()];
    header.extend(sim.window_labels().iter().cloned());
    w.write_record(&header).expect("csv record");
    for (a, label) in sim.window_labels().iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend((0..sim.w()).map(|b| fmt_opt_frac(sim.get(a, b))));
        w.write_record(&row).expect("csv record");
    }
    finish_csv(w)
}

/// `regime_flags.txt`: one flagged window per line with its
/// adjacent-pair similarity.
pub fn regime_flags_txt(flags: &[RegimeFlag]) -> String {
    let mut out = String::new();
    for flag in flags {
        out.push_str(&flag.window_label);
        out.push('\t');
        out.push_str(&fmt_frac(flag.adjacent_similarity));
        out.push('\n');
    }
    out
}

/// Wide-layout CSV of a price panel, parseable by the ingest layer.
/// Prices carry six decimals.
pub fn panel_to_wide_csv(panel: &PricePanel) -> String {
    let mut w = csv_writer();
    let mut header = vec!["date".to_string()];
    header.extend(panel.instruments().iter().map(|id| id.to_string()));
    w.write_record(&header).expect("csv record");
    for (t, date) in panel.dates().iter().enumerate() {
        let mut row = vec![date.format("%Y-%m-%d").to_string()];
        row.extend((0..panel.n_instruments()).map(|i| fmt_frac(panel.close(t, i))));
        w.write_record(&row).expect("csv record");
    }
    finish_csv(w)
}

fn dot_escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

/// `network_<window>.dot`: the largest cluster as an undirected DOT
/// graph; window and theta ride along as graph attributes, edge
/// weights are the correlations.
pub fn cluster_to_dot(cluster: &Cluster) -> String {
    let mut out = String::from("graph corrnet {\n");
    out.push_str(&format!("  window=\"{}\";\n", dot_escape(cluster.window_label())));
    out.push_str(&format!("  theta=\"{}\";\n", fmt_theta(cluster.theta())));
    for node in cluster.nodes() {
        out.push_str(&format!("  \"{}\";\n", dot_escape(node.as_str())));
    }
    for &(i, j, weight) in cluster.edges() {
        out.push_str(&format!(
            "  \"{}\" -- \"{}\" [weight=\"{}\"];\n",
            dot_escape(cluster.nodes()[i].as_str()),
            dot_escape(cluster.nodes()[j].as_str()),
            fmt_corr(weight)
        ));
    }
    out.push_str("}\n");
    out
}

/// Takes a leading quoted, backslash-escaped string off `input`,
/// returning the unescaped content and the rest.
fn take_quoted(input: &str) -> Option<(String, &str)> {
    let rest = input.strip_prefix('"')?;
    let mut out = String::new();
    let mut chars = rest.char_indices();
    while let Some((idx, c)) = chars.next() {
        match c {
            '\\' => {
                let (_, escaped) = chars.next()?;
                out.push(escaped);
            }
            '"' => return Some((out, &rest[idx + 1..])),
            _ => out.push(c),
        }
    }
    None
}

fn dot_parse_error(line_no: usize, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        line: line_no as u64,
        reason: format!("dot: {}", reason.into()),
    }
}

/// Reads back a cluster written by [`cluster_to_dot`].
pub fn parse_dot_cluster(text: &str) -> Result<Cluster> {
    let mut window = None;
    let mut theta = None;
    let mut nodes: Vec<InstrumentId> = Vec::new();
    let mut edges: Vec<(InstrumentId, InstrumentId, f64)> = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line == "}" || line.starts_with("graph ") {
            continue;
        }
        let line = line
            .strip_suffix(';')
            .ok_or_else(|| dot_parse_error(line_no, "missing terminating semicolon"))?;
        if let Some(value) = line.strip_prefix("window=") {
            let (label, _) = take_quoted(value)
                .ok_or_else(|| dot_parse_error(line_no, "bad window attribute"))?;
            window = Some(label);
        } else if let Some(value) = line.strip_prefix("theta=") {
            let (raw, _) = take_quoted(value)
                .ok_or_else(|| dot_parse_error(line_no, "bad theta attribute"))?;
            theta = Some(raw.parse::<f64>().map_err(|_| {
                dot_parse_error(line_no, format!("theta {raw:?} is not a number"))
            })?);
        } else if let Some((first, rest)) = take_quoted(line) {
            let rest = rest.trim_start();
            if rest.is_empty() {
                nodes.push(InstrumentId::new(first));
            } else {
                let rest = rest
                    .strip_prefix("--")
                    .ok_or_else(|| dot_parse_error(line_no, "expected `--` between endpoints"))?
                    .trim_start();
                let (second, tail) = take_quoted(rest)
                    .ok_or_else(|| dot_parse_error(line_no, "bad edge target"))?;
                let tail = tail.trim();
                let weight_raw = tail
                    .strip_prefix("[weight=")
                    .and_then(|t| t.strip_suffix(']'))
                    .ok_or_else(|| dot_parse_error(line_no, "bad edge attributes"))?;
                let (weight_str, _) = take_quoted(weight_raw)
                    .ok_or_else(|| dot_parse_error(line_no, "bad weight value"))?;
                let weight = weight_str.parse::<f64>().map_err(|_| {
                    dot_parse_error(line_no, format!("weight {weight_str:?} is not a number"))
                })?;
                edges.push((InstrumentId::new(first), InstrumentId::new(second), weight));
            }
        } else {
            return Err(dot_parse_error(line_no, format!("unrecognized line {line:?}")));
        }
    }

    let window = window.ok_or_else(|| dot_parse_error(0, "missing window attribute"))?;
    let theta = theta.ok_or_else(|| dot_parse_error(0, "missing theta attribute"))?;
    Cluster::from_edge_list(window, theta, nodes, &edges)
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

/// `network_<window>.graphml`: the largest cluster with a `weight`
/// attribute per edge and theta attached to the graph element.
pub fn cluster_to_graphml(cluster: &Cluster) -> String {
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n\
         \x20 <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n\
         \x20 <key id=\"theta\" for=\"graph\" attr.name=\"theta\" attr.type=\"double\"/>\n",
    );
    out.push_str(&format!(
        "  <graph id=\"{}\" edgedefault=\"undirected\">\n",
        xml_escape(cluster.window_label())
    ));
    out.push_str(&format!(
        "    <data key=\"theta\">{}</data>\n",
        fmt_theta(cluster.theta())
    ));
    for node in cluster.nodes() {
        out.push_str(&format!("    <node id=\"{}\"/>\n", xml_escape(node.as_str())));
    }
    for &(i, j, weight) in cluster.edges() {
        out.push_str(&format!(
            "    <edge source=\"{}\" target=\"{}\"><data key=\"weight\">{}</data></edge>\n",
            xml_escape(cluster.nodes()[i].as_str()),
            xml_escape(cluster.nodes()[j].as_str()),
            fmt_corr(weight)
        ));
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::ingest::{align_calendars, parse_prices, weekday_dates, FillPolicy, Layout};
    use crate::similarity::similarity_matrix;
    use crate::synth::rng::Xoshiro256PlusPlus;

    fn sample_cluster() -> Cluster {
        let nodes: Vec<InstrumentId> = ["US", "UK", "JPN"].iter().map(|l| InstrumentId::new(*l)).collect();
        let edges = vec![
            (nodes[0].clone(), nodes[1].clone(), 0.512345678),
            (nodes[1].clone(), nodes[2].clone(), 0.431),
        ];
        Cluster::from_edge_list("2008", 0.3, nodes, &edges).unwrap()
    }

    fn random_matrix(seed: u64, n: usize) -> CorrelationMatrix {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let mut values = vec![vec![0.0; n]; n];
        for i in 0..n {
            values[i][i] = 1.0;
            for j in (i + 1)..n {
                let c = 2.0 * rng.next_f64() - 1.0;
                values[i][j] = c;
                values[j][i] = c;
            }
        }
        let labels = (0..n).map(|i| InstrumentId::new(format!("X{i:02}"))).collect();
        CorrelationMatrix::new(labels, values, "2001").unwrap()
    }

    #[test]
    fn formatting_is_frozen() {
        assert_eq!(fmt_corr(0.5), "5.00000000e-1");
        assert_eq!(fmt_corr(1.0), "1.00000000e0");
        assert_eq!(fmt_corr(-0.003), "-3.00000000e-3");
        assert_eq!(fmt_frac(1.0 / 3.0), "0.333333");
        // rust fixed-precision formatting resolves ties half-to-even
        assert_eq!(format!("{:.2}", 0.125), "0.12");
        assert_eq!(format!("{:.2}", 0.375), "0.38");
    }

    #[test]
    fn correlation_csv_round_trips_within_formatting_precision() {
        let corr = random_matrix(17, 6);
        let text = correlation_csv(&corr);
        let parsed = parse_correlation_csv(&text, "2001").unwrap();
        assert_eq!(parsed.instruments(), corr.instruments());
        for i in 0..6 {
            for j in 0..6 {
                assert_abs_diff_eq!(parsed.get(i, j), corr.get(i, j), epsilon = 1e-8);
            }
        }
        // writing is deterministic
        assert_eq!(text, correlation_csv(&corr));
    }

    #[test]
    fn corrupted_correlation_csv_is_rejected() {
        let corr = random_matrix(3, 3);
        let text = correlation_csv(&corr);
        // header label no longer matches the row label below it
        let mangled = text.replacen("X01", "X9!", 1);
        assert!(parse_correlation_csv(&mangled, "2001").is_err());
        // non-numeric cell (the diagonal is always 1.00000000e0)
        let mangled = text.replacen("1.00000000e0", "not-a-number", 1);
        assert!(parse_correlation_csv(&mangled, "2001").is_err());
    }

    #[test]
    fn dot_round_trips_nodes_edges_and_identity() {
        let cluster = sample_cluster();
        let text = cluster_to_dot(&cluster);
        let parsed = parse_dot_cluster(&text).unwrap();
        assert_eq!(parsed.window_label(), "2008");
        assert_eq!(parsed.theta(), 0.3);
        assert_eq!(parsed.nodes(), cluster.nodes());
        assert_eq!(parsed.edges().len(), 2);
        assert_eq!(parsed.edge_label_pairs(), cluster.edge_label_pairs());
    }

    #[test]
    fn dot_escapes_awkward_labels() {
        let nodes: Vec<InstrumentId> = [r#"A"quote"#, r"B\slash"].iter().map(|l| InstrumentId::new(*l)).collect();
        let edges = vec![(nodes[0].clone(), nodes[1].clone(), 0.9)];
        let cluster = Cluster::from_edge_list("w", 0.5, nodes.clone(), &edges).unwrap();
        let parsed = parse_dot_cluster(&cluster_to_dot(&cluster)).unwrap();
        assert_eq!(parsed.nodes(), nodes.as_slice());
    }

    #[test]
    fn graphml_lists_nodes_edges_and_theta() {
        let text = cluster_to_graphml(&sample_cluster());
        assert!(text.contains("<node id=\"US\"/>"));
        assert!(text.contains("<edge source=\"US\" target=\"UK\">"));
        assert!(text.contains("<data key=\"weight\">5.12345678e-1</data>"));
        assert!(text.contains("<data key=\"theta\">0.3</data>"));
        assert!(text.contains("edgedefault=\"undirected\""));
    }

    #[test]
    fn volatility_csv_has_mean_row_per_window() {
        let report = VolatilityReport {
            per_index: vec![
                (InstrumentId::new("A"), 0.01),
                (InstrumentId::new("B"), 0.03),
            ],
            cross_sectional_mean: 0.02,
            window_label: "2000".into(),
        };
        let text = volatility_csv(&[report]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "window,instrument,v");
        assert_eq!(lines[1], "2000,A,1.00000000e-2");
        assert_eq!(lines[3], "2000,__MEAN__,2.00000000e-2");
    }

    #[test]
    fn jaccard_csv_leaves_undefined_cells_empty() {
        let a = Cluster::from_edge_list("w0", 0.3, vec![InstrumentId::new("x")], &[]).unwrap();
        let nodes: Vec<InstrumentId> = ["p", "q"].iter().map(|l| InstrumentId::new(*l)).collect();
        let edges = vec![(nodes[0].clone(), nodes[1].clone(), 0.9)];
        let b = Cluster::from_edge_list("w1", 0.3, nodes, &edges).unwrap();
        let sim = similarity_matrix(&[a, b]).unwrap();
        let text = jaccard_csv(&sim);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "window,w0,w1");
        assert_eq!(lines[1], "w0,,0.000000");
        assert_eq!(lines[2], "w1,0.000000,1.000000");
    }

    #[test]
    fn wide_csv_round_trips_through_ingest() {
        let dates = weekday_dates(chrono::NaiveDate::from_ymd_opt(2003, 6, 2).unwrap(), 5);
        let closes: Vec<Vec<f64>> = (0..5)
            .map(|t| vec![100.0 + 0.37 * t as f64, 55.5 - 0.11 * t as f64])
            .collect();
        let panel = PricePanel::from_observed(
            dates,
            vec![InstrumentId::new("A"), InstrumentId::new("B")],
            closes,
        )
        .unwrap();
        let text = panel_to_wide_csv(&panel);
        let raw = parse_prices(&text, Layout::Wide).unwrap();
        let (parsed, _) = align_calendars(&raw, FillPolicy::Intersect).unwrap();
        assert_eq!(parsed.dates(), panel.dates());
        for t in 0..5 {
            for i in 0..2 {
                assert_abs_diff_eq!(parsed.close(t, i), panel.close(t, i), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn regime_flags_file_lists_label_and_similarity() {
        let flags = vec![RegimeFlag {
            window_label: "2008".into(),
            adjacent_similarity: 0.1034,
        }];
        assert_eq!(regime_flags_txt(&flags), "2008\t0.103400\n");
        assert_eq!(regime_flags_txt(&[]), "");
    }
}
