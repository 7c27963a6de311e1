//! Builtin benchmark topologies.
//!
//! Each scenario is a cluster-of-clusters fabric with 890 Mbps node access
//! links (the achievable rate of a 1 GbE NIC), and either a 1 Gbps
//! switch-to-switch bottleneck (single-site scenarios) or 10 Gbps wide-area
//! trunks with a 787 Mbps per-flow ceiling (multi-site scenarios).

use crate::error::{Error, Result};
use crate::swarm::SwarmConfig;
use crate::topology::{GroundTruth, Link, PhysicalTopology, Vertex};

/// Achievable node NIC rate in Mbps.
pub const NIC_MBPS: f64 = 890.0;
/// Wide-area trunk rate in Mbps.
pub const TRUNK_MBPS: f64 = 10_000.0;
/// Per-flow ceiling on wide-area paths in Mbps.
pub const TRUNK_FLOW_CAP_MBPS: f64 = 787.0;
/// The single-site switch-to-switch bottleneck in Mbps.
pub const BOTTLENECK_MBPS: f64 = 1_000.0;

pub struct ScenarioInfo {
    pub name: &'static str,
    pub nodes: usize,
    pub clusters: u32,
    pub summary: &'static str,
}

pub const SCENARIOS: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "B",
        nodes: 64,
        clusters: 2,
        summary: "one site, 32+5+27 nodes on 3 switches, 1 Gbps bottleneck isolating the first group",
    },
    ScenarioInfo {
        name: "GT",
        nodes: 64,
        clusters: 2,
        summary: "two sites of 32 nodes, 10 Gbps trunk",
    },
    ScenarioInfo {
        name: "BGT",
        nodes: 96,
        clusters: 3,
        summary: "three sites of 32 nodes, fully meshed 10 Gbps trunks",
    },
    ScenarioInfo {
        name: "BGTL",
        nodes: 64,
        clusters: 4,
        summary: "four sites of 16 nodes, 10 Gbps star with the hub at the last site",
    },
    ScenarioInfo {
        name: "2x2",
        nodes: 4,
        clusters: 1,
        summary: "2+2 nodes across the 1 Gbps link; too small for an effective bottleneck",
    },
];

struct Site {
    prefix: &'static str,
    count: usize,
    cluster: u32,
}

/// Trunk between site switches, by site index.
struct Trunk {
    a: usize,
    b: usize,
    capacity_mbps: f64,
    flow_cap_mbps: Option<f64>,
}

fn build(sites: &[Site], trunks: &[Trunk]) -> (PhysicalTopology, GroundTruth) {
    let mut nodes = Vec::new();
    let mut labels = Vec::new();
    let mut links = Vec::new();
    let switches: Vec<String> = sites.iter().map(|s| format!("sw-{}", s.prefix)).collect();
    for (si, site) in sites.iter().enumerate() {
        for i in 0..site.count {
            links.push(Link {
                a: Vertex::Node(nodes.len() as u32),
                b: Vertex::Switch(si as u32),
                capacity_mbps: NIC_MBPS,
                duplex: true,
                flow_cap_mbps: None,
            });
            nodes.push(format!("{}{:02}", site.prefix, i));
            labels.push(site.cluster);
        }
    }
    for t in trunks {
        links.push(Link {
            a: Vertex::Switch(t.a as u32),
            b: Vertex::Switch(t.b as u32),
            capacity_mbps: t.capacity_mbps,
            duplex: true,
            flow_cap_mbps: t.flow_cap_mbps,
        });
    }
    let topology = PhysicalTopology::new(nodes, switches, links).expect("builtin scenarios are valid");
    (topology, GroundTruth::from_labels(labels))
}

fn wan(a: usize, b: usize) -> Trunk {
    Trunk {
        a,
        b,
        capacity_mbps: TRUNK_MBPS,
        flow_cap_mbps: Some(TRUNK_FLOW_CAP_MBPS),
    }
}

/// The protocol preset for builtin scenarios.
///
/// The reference broadcasts behind the builtin fabrics took tens of
/// wall-clock seconds, so two or three choke rounds fell inside each one.
/// The fluid model has none of the per-transfer protocol overhead and
/// finishes the same file in a few simulated seconds; with the stock
/// 10-second period the rate-reciprocation mechanism would never engage
/// at all. The preset scales the round period to preserve the
/// rounds-per-broadcast ratio. Everything else keeps its default.
pub fn preset(name: &str) -> Result<SwarmConfig> {
    // Validate the name.
    let _ = SCENARIOS
        .iter()
        .find(|s| s.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownScenario(name.to_string()))?;
    Ok(SwarmConfig { unchoke_period: 0.2, ..SwarmConfig::default() })
}

/// Look up a builtin scenario by name (case-insensitive).
pub fn scenario(name: &str) -> Result<(PhysicalTopology, GroundTruth)> {
    let canon = SCENARIOS
        .iter()
        .find(|s| s.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownScenario(name.to_string()))?;
    Ok(match canon.name {
        "B" => build(
            &[
                Site { prefix: "plage", count: 32, cluster: 0 },
                Site { prefix: "line", count: 5, cluster: 1 },
                Site { prefix: "reau", count: 27, cluster: 1 },
            ],
            &[
                Trunk { a: 0, b: 1, capacity_mbps: BOTTLENECK_MBPS, flow_cap_mbps: None },
                Trunk { a: 1, b: 2, capacity_mbps: TRUNK_MBPS, flow_cap_mbps: None },
            ],
        ),
        "GT" => build(
            &[
                Site { prefix: "gren", count: 32, cluster: 0 },
                Site { prefix: "toul", count: 32, cluster: 1 },
            ],
            &[wan(0, 1)],
        ),
        "BGT" => build(
            &[
                Site { prefix: "bord", count: 32, cluster: 0 },
                Site { prefix: "gren", count: 32, cluster: 1 },
                Site { prefix: "toul", count: 32, cluster: 2 },
            ],
            &[wan(0, 1), wan(0, 2), wan(1, 2)],
        ),
        "BGTL" => build(
            &[
                Site { prefix: "bord", count: 16, cluster: 0 },
                Site { prefix: "gren", count: 16, cluster: 1 },
                Site { prefix: "toul", count: 16, cluster: 2 },
                Site { prefix: "lyon", count: 16, cluster: 3 },
            ],
            &[wan(0, 3), wan(1, 3), wan(2, 3)],
        ),
        "2x2" => build(
            &[
                Site { prefix: "plage", count: 2, cluster: 0 },
                Site { prefix: "line", count: 2, cluster: 0 },
            ],
            &[Trunk { a: 0, b: 1, capacity_mbps: BOTTLENECK_MBPS, flow_cap_mbps: None }],
        ),
        _ => unreachable!(),
    })
}
