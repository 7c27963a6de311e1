//! Graphviz export of measurement graphs.
//!
//! Only the heaviest fraction of edges is drawn (fragment exchange graphs
//! are near-complete; the light tail is noise) and edge lengths are the
//! inverse of weight, calibrated so the median drawn edge has length 1.
//! Layouts that honor `len` (neato, fdp) then pull heavy pairs together,
//! which makes the cluster structure visible before any algorithm runs.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metric::MeasurementGraph;
use crate::partition::Partition;

/// Marker shapes assigned to ground-truth clusters, reused cyclically.
const SHAPES: [&str; 8] = [
    "circle", "diamond", "triangle", "square", "ellipse", "pentagon", "hexagon", "octagon",
];

pub struct DotOptions<'a> {
    /// Fraction of edges to draw, heaviest first, in (0, 1].
    pub fraction: f64,
    /// Shape nodes by this partition when given.
    pub truth: Option<&'a Partition>,
    /// Node display names; ids are used when absent.
    pub names: Option<&'a [String]>,
}

impl Default for DotOptions<'_> {
    fn default() -> Self {
        DotOptions { fraction: 0.5, truth: None, names: None }
    }
}

/// Render the measurement graph as an undirected DOT document.
pub fn to_dot(g: &MeasurementGraph, opts: &DotOptions) -> Result<String> {
    if !(opts.fraction > 0.0 && opts.fraction <= 1.0) {
        return Err(Error::parse(format!("edge fraction must be in (0, 1], got {}", opts.fraction)));
    }
    let n = g.node_count();
    if let Some(t) = opts.truth {
        if t.len() != n {
            return Err(Error::NodeCountMismatch { left: n, right: t.len() });
        }
    }
    if let Some(names) = opts.names {
        if names.len() != n {
            return Err(Error::NodeCountMismatch { left: n, right: names.len() });
        }
    }

    let mut edges: Vec<(u32, u32, f64)> = g.weights().collect();
    if edges.is_empty() {
        return Err(Error::ZeroWeightGraph);
    }
    edges.sort_unstable_by(|x, y| y.2.total_cmp(&x.2).then_with(|| (x.0, x.1).cmp(&(y.0, y.1))));
    let keep = (opts.fraction * edges.len() as f64).ceil() as usize;
    let keep = keep.clamp(1, edges.len());
    edges.truncate(keep);

    // Calibrate so the median drawn edge has len exactly 1. Weights are
    // sorted descending, so the middle weights are the median ones.
    let scale = if keep % 2 == 1 {
        edges[keep / 2].2
    } else {
        let (w1, w2) = (edges[keep / 2 - 1].2, edges[keep / 2].2);
        2.0 * w1 * w2 / (w1 + w2)
    };

    let mut out = String::from("graph G {\n");
    let _ = writeln!(out, "  layout=neato;");
    let _ = writeln!(out, "  overlap=false;");
    for v in 0..n {
        let mut attrs = Vec::new();
        if let Some(names) = opts.names {
            attrs.push(format!("label=\"{}\"", names[v].replace('"', "\\\"")));
        }
        if let Some(t) = opts.truth {
            attrs.push(format!("shape={}", SHAPES[t.label(v) as usize % SHAPES.len()]));
        }
        if attrs.is_empty() {
            let _ = writeln!(out, "  {};", v);
        } else {
            let _ = writeln!(out, "  {} [{}];", v, attrs.join(", "));
        }
    }
    for (a, b, w) in &edges {
        let _ = writeln!(out, "  {} -- {} [len={:.6}, weight={}];", a, b, scale / w, w);
    }
    out.push_str("}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(u32, u32, f64)]) -> MeasurementGraph {
        let csv: String = std::iter::once("node_a,node_b,weight\n".to_string())
            .chain(edges.iter().map(|(a, b, w)| format!("{},{},{}\n", a, b, w)))
            .collect();
        MeasurementGraph::from_csv(&csv, n).unwrap()
    }

    #[test]
    fn median_edge_gets_unit_length() {
        // Odd count: the middle weight calibrates to len exactly 1.
        let g = graph(4, &[(0, 1, 4.0), (1, 2, 2.0), (2, 3, 1.0)]);
        let dot = to_dot(&g, &DotOptions { fraction: 1.0, ..Default::default() }).unwrap();
        assert!(dot.contains("0 -- 1 [len=0.500000, weight=4];"), "{}", dot);
        assert!(dot.contains("1 -- 2 [len=1.000000, weight=2];"), "{}", dot);
        assert!(dot.contains("2 -- 3 [len=2.000000, weight=1];"), "{}", dot);
    }

    #[test]
    fn even_count_median_is_harmonic() {
        // Weights 6,3,2,1: scale = harmonic mean of 3 and 2 = 2.4, so the
        // two middle lens average to exactly 1.
        let g = graph(5, &[(0, 1, 6.0), (1, 2, 3.0), (2, 3, 2.0), (3, 4, 1.0)]);
        let dot = to_dot(&g, &DotOptions { fraction: 1.0, ..Default::default() }).unwrap();
        assert!(dot.contains("0 -- 1 [len=0.400000"), "{}", dot);
        assert!(dot.contains("1 -- 2 [len=0.800000"), "{}", dot);
        assert!(dot.contains("2 -- 3 [len=1.200000"), "{}", dot);
        assert!(dot.contains("3 -- 4 [len=2.400000"), "{}", dot);
    }

    #[test]
    fn fraction_keeps_the_heaviest_edges() {
        let g = graph(
            6,
            &[(0, 1, 9.0), (1, 2, 7.0), (2, 3, 5.0), (3, 4, 3.0), (4, 5, 1.0)],
        );
        // ceil(0.5 * 5) = 3 edges survive.
        let dot = to_dot(&g, &DotOptions { fraction: 0.5, ..Default::default() }).unwrap();
        assert!(dot.contains("0 -- 1"));
        assert!(dot.contains("1 -- 2"));
        assert!(dot.contains("2 -- 3"));
        assert!(!dot.contains("3 -- 4"));
        assert!(!dot.contains("4 -- 5"));
        // Dropped nodes still appear as vertices.
        assert!(dot.contains("\n  5;\n"));
    }

    #[test]
    fn truth_labels_pick_shapes_and_names_label_nodes() {
        let g = graph(4, &[(0, 1, 2.0), (2, 3, 2.0), (1, 2, 1.0)]);
        let truth = Partition::from_labels([0u32, 0, 1, 1]);
        let names: Vec<String> = ["a", "b", "c", "d"].map(String::from).to_vec();
        let dot = to_dot(
            &g,
            &DotOptions { fraction: 1.0, truth: Some(&truth), names: Some(&names) },
        )
        .unwrap();
        assert!(dot.contains("0 [label=\"a\", shape=circle];"), "{}", dot);
        assert!(dot.contains("2 [label=\"c\", shape=diamond];"), "{}", dot);
        assert!(dot.starts_with("graph G {\n"));
        assert!(dot.ends_with("}\n"));
    }

    #[test]
    fn ties_break_on_node_ids() {
        let g = graph(4, &[(2, 3, 1.0), (0, 1, 1.0), (1, 2, 1.0)]);
        let dot = to_dot(&g, &DotOptions { fraction: 0.34, ..Default::default() }).unwrap();
        // ceil(0.34 * 3) = 2 edges; equal weights, so lowest pairs win.
        assert!(dot.contains("0 -- 1"));
        assert!(dot.contains("1 -- 2"));
        assert!(!dot.contains("2 -- 3"));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let g = graph(3, &[(0, 1, 1.0)]);
        assert!(to_dot(&g, &DotOptions { fraction: 0.0, ..Default::default() }).is_err());
        assert!(to_dot(&g, &DotOptions { fraction: 1.1, ..Default::default() }).is_err());
        let empty = MeasurementGraph::new(3);
        assert!(matches!(
            to_dot(&empty, &DotOptions::default()),
            Err(Error::ZeroWeightGraph)
        ));
        let short = Partition::single_cluster(2);
        assert!(to_dot(&g, &DotOptions { truth: Some(&short), ..Default::default() }).is_err());
    }
}
