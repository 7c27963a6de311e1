//! Bandwidth tomography for capacity-constrained networks, measured by
//! simulated BitTorrent-style broadcasts.
//!
//! The pipeline: simulate synchronized broadcasts over a physical topology
//! ([`swarm::run_broadcast`]), fold the per-run transfer ledgers into a
//! weighted measurement graph ([`metric`]), cluster it with weighted
//! modularity maximization ([`cluster::louvain`]), and score the recovered
//! partition against ground truth ([`eval::nmi`]). [`experiment`] wires the
//! stages into reproducible multi-run campaigns, [`export`] renders
//! measurement graphs as DOT.
//!
//! The `examples/` directory is the front door; each example exercises one
//! capability end to end:
//!
//! * `broadcast` - one simulated broadcast on a built-in scenario.
//! * `custom_topology` - define a topology in JSON and route on it.
//! * `cluster_and_score` - Louvain plus NMI on a measurement graph.
//! * `convergence` - NMI as a function of the number of runs.
//! * `export_dot` - render a measurement graph for Graphviz.
//! * `full_experiment` - the whole pipeline with artifacts on disk.
//!
//! A thin `tomo` binary wraps the same entry points for shell use.

pub mod cluster;
mod error;
pub mod eval;
pub mod experiment;
pub mod export;
pub mod metric;
pub mod partition;
pub mod scenarios;
mod seeds;
pub mod swarm;
pub mod topology;

pub use error::{Error, Result};
pub use partition::Partition;
