//! Physical topology model: end hosts, non-blocking switches, and
//! capacity-labeled duplex links, plus the ground-truth cluster map used
//! for scoring.
//!
//! Routing assumes shortest paths by hop count. When several shortest paths
//! exist the tie is broken deterministically (lexicographically smallest
//! link-id sequence, computed from the lower-numbered endpoint), so every
//! ordered node pair has exactly one route and `route(a,b)` is always the
//! reverse of `route(b,a)`.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Partition;

/// Ground truth is just a partition of the nodes.
pub type GroundTruth = Partition;

/// Endpoint of a link: an end host (traffic source/sink) or a switch
/// (non-blocking, forwards at line rate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Vertex {
    Node(u32),
    Switch(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub a: Vertex,
    pub b: Vertex,
    pub capacity_mbps: f64,
    /// Full duplex: each direction has the full capacity. Half duplex:
    /// both directions share one capacity pool.
    pub duplex: bool,
    /// Optional per-flow ceiling (Mbps) for flows routed across this link,
    /// modeling WAN paths where a single stream cannot fill the pipe.
    pub flow_cap_mbps: Option<f64>,
}

impl Link {
    pub fn capacity_bps(&self) -> f64 {
        self.capacity_mbps * 1e6
    }

    pub fn flow_cap_bps(&self) -> Option<f64> {
        self.flow_cap_mbps.map(|c| c * 1e6)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalTopology {
    node_names: Vec<String>,
    switch_names: Vec<String>,
    links: Vec<Link>,
    /// Per node: index of its single access link.
    access: Vec<usize>,
    /// Per vertex (nodes, then switches): (neighbor vertex, link id),
    /// sorted by link id.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl PhysicalTopology {
    /// Build and validate. `nodes`/`switches` are display names; link
    /// endpoints refer to them by `Vertex` index.
    pub fn new(nodes: Vec<String>, switches: Vec<String>, links: Vec<Link>) -> Result<PhysicalTopology> {
        let n = nodes.len();
        let s = switches.len();
        if n < 2 {
            return Err(Error::topology("need at least 2 nodes"));
        }
        let mut names = HashSet::new();
        for name in nodes.iter().chain(switches.iter()) {
            if name.is_empty() {
                return Err(Error::topology("empty vertex name"));
            }
            if !names.insert(name.as_str()) {
                return Err(Error::topology(format!("duplicate vertex name '{}'", name)));
            }
        }

        let vertex_index = |v: Vertex| -> Result<usize> {
            match v {
                Vertex::Node(i) if (i as usize) < n => Ok(i as usize),
                Vertex::Switch(i) if (i as usize) < s => Ok(n + i as usize),
                _ => Err(Error::topology(format!("link endpoint {:?} does not exist", v))),
            }
        };

        let mut adjacency = vec![Vec::new(); n + s];
        let mut seen_pairs = HashSet::new();
        for (id, link) in links.iter().enumerate() {
            let ia = vertex_index(link.a)?;
            let ib = vertex_index(link.b)?;
            if ia == ib {
                return Err(Error::topology(format!("link {} is a self-loop", id)));
            }
            if !seen_pairs.insert((ia.min(ib), ia.max(ib))) {
                return Err(Error::topology(format!(
                    "link {} duplicates an earlier link between the same endpoints",
                    id
                )));
            }
            if !(link.capacity_mbps.is_finite() && link.capacity_mbps > 0.0) {
                return Err(Error::topology(format!("link {}: capacity must be positive", id)));
            }
            if let Some(cap) = link.flow_cap_mbps {
                if !(cap.is_finite() && cap > 0.0) {
                    return Err(Error::topology(format!("link {}: flow cap must be positive", id)));
                }
            }
            adjacency[ia].push((ib, id));
            adjacency[ib].push((ia, id));
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|&(_, id)| id);
        }

        let mut access = Vec::with_capacity(n);
        for node in 0..n {
            match adjacency[node].len() {
                1 => access.push(adjacency[node][0].1),
                0 => return Err(Error::topology(format!("node '{}' has no access link", nodes[node]))),
                k => {
                    return Err(Error::topology(format!(
                        "node '{}' has {} links; end hosts must have exactly one access link",
                        nodes[node], k
                    )))
                }
            }
        }

        // Whole fabric must be one component.
        let mut seen = vec![false; n + s];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(w, _) in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if seen.iter().any(|&v| !v) {
            return Err(Error::topology("fabric is not connected"));
        }

        Ok(PhysicalTopology {
            node_names: nodes,
            switch_names: switches,
            links,
            access,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    pub fn switch_count(&self) -> usize {
        self.switch_names.len()
    }

    pub fn node_name(&self, node: usize) -> &str {
        &self.node_names[node]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// Capacity of the node's access link, i.e. its effective NIC rate.
    pub fn nic_capacity_bps(&self, node: usize) -> f64 {
        self.links[self.access[node]].capacity_bps()
    }

    fn vertex_idx(&self, v: Vertex) -> usize {
        match v {
            Vertex::Node(i) => i as usize,
            Vertex::Switch(i) => self.node_count() + i as usize,
        }
    }

    /// Ordered link ids from `src` to `dst`. Panics if `src == dst` or out
    /// of range; validation guarantees a path exists.
    pub fn route(&self, src: usize, dst: usize) -> Vec<usize> {
        assert!(src != dst, "route requires distinct nodes");
        if src > dst {
            let mut path = self.route(dst, src);
            path.reverse();
            return path;
        }
        // BFS distances toward dst, then walk greedily from src taking the
        // smallest link id that makes progress: prefix-greedy selection is
        // exactly the lexicographically smallest shortest path.
        let target = self.vertex_idx(Vertex::Node(dst as u32));
        let mut dist = vec![u32::MAX; self.adjacency.len()];
        dist[target] = 0;
        let mut queue = std::collections::VecDeque::from([target]);
        while let Some(v) = queue.pop_front() {
            for &(w, _) in &self.adjacency[v] {
                if dist[w] == u32::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        let mut path = Vec::new();
        let mut v = self.vertex_idx(Vertex::Node(src as u32));
        assert!(dist[v] != u32::MAX, "validated topology must be connected");
        while v != target {
            let &(next, link) = self.adjacency[v]
                .iter()
                .find(|&&(w, _)| dist[w] == dist[v] - 1)
                .expect("BFS guarantees a next hop");
            path.push(link);
            v = next;
        }
        path
    }
}

// ---------------------------------------------------------------------------
// Document format

#[derive(Serialize, Deserialize)]
struct LinkDoc {
    a: String,
    b: String,
    capacity_mbps: f64,
    #[serde(default = "default_duplex")]
    duplex: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flow_cap_mbps: Option<f64>,
}

fn default_duplex() -> bool {
    true
}

#[derive(Serialize, Deserialize)]
struct TopologyDoc {
    nodes: Vec<String>,
    #[serde(default)]
    switches: Vec<String>,
    links: Vec<LinkDoc>,
    ground_truth: BTreeMap<String, serde_json::Value>,
}

#[derive(Hash, PartialEq, Eq)]
enum LabelKey {
    Int(i64),
    Str(String),
}

/// Parse a topology document (JSON). Returns the validated topology and the
/// densified ground-truth partition.
pub fn parse_document(text: &str) -> Result<(PhysicalTopology, GroundTruth)> {
    let doc: TopologyDoc = serde_json::from_str(text).map_err(|e| Error::parse(format!("topology document: {}", e)))?;
    let mut index: HashMap<&str, Vertex> = HashMap::new();
    for (i, name) in doc.nodes.iter().enumerate() {
        index.insert(name.as_str(), Vertex::Node(i as u32));
    }
    for (i, name) in doc.switches.iter().enumerate() {
        if index.insert(name.as_str(), Vertex::Switch(i as u32)).is_some() {
            return Err(Error::parse(format!("name '{}' declared twice", name)));
        }
    }
    let mut links = Vec::with_capacity(doc.links.len());
    for (i, l) in doc.links.iter().enumerate() {
        let resolve = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::parse(format!("link {}: unknown endpoint '{}'", i, name)))
        };
        links.push(Link {
            a: resolve(&l.a)?,
            b: resolve(&l.b)?,
            capacity_mbps: l.capacity_mbps,
            duplex: l.duplex,
            flow_cap_mbps: l.flow_cap_mbps,
        });
    }

    let mut raw_labels = Vec::with_capacity(doc.nodes.len());
    for name in &doc.nodes {
        let value = doc
            .ground_truth
            .get(name)
            .ok_or_else(|| Error::parse(format!("ground_truth is missing node '{}'", name)))?;
        raw_labels.push(label_key(name, value)?);
    }
    for name in doc.ground_truth.keys() {
        if !matches!(index.get(name.as_str()), Some(Vertex::Node(_))) {
            return Err(Error::parse(format!("ground_truth names unknown node '{}'", name)));
        }
    }

    let topology = PhysicalTopology::new(doc.nodes, doc.switches, links)?;
    Ok((topology, Partition::from_labels(raw_labels)))
}

fn label_key(name: &str, value: &serde_json::Value) -> Result<LabelKey> {
    match value {
        serde_json::Value::Number(n) => n
            .as_i64()
            .map(LabelKey::Int)
            .ok_or_else(|| Error::parse(format!("ground_truth['{}']: label must be an integer", name))),
        serde_json::Value::String(s) => Ok(LabelKey::Str(s.clone())),
        _ => Err(Error::parse(format!(
            "ground_truth['{}']: label must be an integer or string",
            name
        ))),
    }
}

/// Serialize back to the document format. Parsing the output reproduces the
/// same topology and ground truth.
pub fn to_document(topology: &PhysicalTopology, truth: &GroundTruth) -> String {
    assert_eq!(truth.len(), topology.node_count(), "ground truth covers all nodes");
    let name_of = |v: Vertex| -> String {
        match v {
            Vertex::Node(i) => topology.node_names[i as usize].clone(),
            Vertex::Switch(i) => topology.switch_names[i as usize].clone(),
        }
    };
    let doc = TopologyDoc {
        nodes: topology.node_names.clone(),
        switches: topology.switch_names.clone(),
        links: topology
            .links
            .iter()
            .map(|l| LinkDoc {
                a: name_of(l.a),
                b: name_of(l.b),
                capacity_mbps: l.capacity_mbps,
                duplex: l.duplex,
                flow_cap_mbps: l.flow_cap_mbps,
            })
            .collect(),
        ground_truth: topology
            .node_names
            .iter()
            .enumerate()
            .map(|(i, name)| (name.clone(), serde_json::Value::from(truth.label(i))))
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("document serialization cannot fail");
    text.push('\n');
    text
}
