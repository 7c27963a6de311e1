//! Node partitions: cluster assignments over a dense node range.
//!
//! Used for ground truth (from topology documents), clustering output, and
//! scoring. Labels are always dense `0..k`, renumbered by first appearance
//! in node order, so two partitions are equal iff they induce the same
//! grouping with the same canonical labeling.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<u32>,
    clusters: u32,
}

impl Partition {
    /// Canonicalize arbitrary hashable labels to dense cluster ids by first
    /// appearance in node order.
    pub fn from_labels<T: std::hash::Hash + Eq>(raw: impl IntoIterator<Item = T>) -> Partition {
        let mut dense: HashMap<T, u32> = HashMap::new();
        let mut labels = Vec::new();
        for value in raw {
            let next = dense.len() as u32;
            labels.push(*dense.entry(value).or_insert(next));
        }
        let clusters = dense.len() as u32;
        Partition { labels, clusters }
    }

    /// All nodes in one cluster.
    pub fn single_cluster(len: usize) -> Partition {
        Partition {
            labels: vec![0; len],
            clusters: if len == 0 { 0 } else { 1 },
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of clusters `k`.
    pub fn clusters(&self) -> u32 {
        self.clusters
    }

    pub fn label(&self, node: usize) -> u32 {
        self.labels[node]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Cluster sizes indexed by label.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.clusters as usize];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// `node,cluster` rows, one per node in node order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,cluster\n");
        for (node, &label) in self.labels.iter().enumerate() {
            let _ = writeln!(out, "{},{}", node, label);
        }
        out
    }

    /// Parse `node,cluster` rows. Nodes may appear in any order but must
    /// cover a dense `0..n` range exactly once; labels are re-densified.
    pub fn from_csv(text: &str) -> Result<Partition> {
        let mut rows: Vec<(usize, u64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line == "node,cluster") {
                continue;
            }
            let (node, label) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(format!("partition line {}: expected node,cluster", lineno + 1)))?;
            let node: usize = node
                .trim()
                .parse()
                .map_err(|_| Error::parse(format!("partition line {}: bad node id '{}'", lineno + 1, node)))?;
            let label: u64 = label
                .trim()
                .parse()
                .map_err(|_| Error::parse(format!("partition line {}: bad cluster label '{}'", lineno + 1, label)))?;
            rows.push((node, label));
        }
        if rows.is_empty() {
            return Err(Error::parse("partition file has no rows"));
        }
        let n = rows.len();
        let mut raw = vec![None; n];
        for (node, label) in rows {
            if node >= n {
                return Err(Error::parse(format!(
                    "partition node id {} out of range for {} rows",
                    node, n
                )));
            }
            if raw[node].replace(label).is_some() {
                return Err(Error::parse(format!("partition node {} listed twice", node)));
            }
        }
        Ok(Partition::from_labels(raw.into_iter().map(|l| l.unwrap())))
    }
}
