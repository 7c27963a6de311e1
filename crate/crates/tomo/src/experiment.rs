//! Reproducible multi-run campaigns: simulate, aggregate, cluster, score,
//! and optionally write the whole artifact bundle to disk.
//!
//! Reproducibility contract: an experiment is a pure function of its
//! config. Per-run seeds and the clustering seed derive from the master
//! seed through fixed stream namespaces, runs execute in parallel but
//! aggregate in iteration order, and every artifact is rendered through
//! deterministic formatting. Two invocations with the same config produce
//! byte-identical bundles.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::cluster::{self, ClusterResult};
use crate::error::{Error, Result};
use crate::eval::{self, TracePoint};
use crate::export::{self, DotOptions};
use crate::metric::{self, MeasurementGraph};
use crate::partition::Partition;
use crate::scenarios;
use crate::seeds;
use crate::swarm::{run_broadcast, SwarmConfig, TransferLedger};
use crate::topology::{parse_document, PhysicalTopology};

#[derive(Debug, Clone)]
pub enum TopologySource {
    /// A named built-in scenario.
    Builtin(String),
    /// A topology document on disk.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootPolicy {
    /// The same node seeds every run.
    Fixed(u32),
    /// Run i is seeded by node i mod n.
    Rotate,
}

/// Optional protocol overrides, mainly for quick experiments; `None`
/// keeps the defaults.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub fragments: Option<u32>,
    pub uploads: Option<u32>,
    pub peer_cap: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub source: TopologySource,
    pub iterations: u32,
    pub master_seed: u64,
    pub root_policy: RootPolicy,
    pub overrides: Overrides,
    /// Write the artifact bundle here when set.
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn builtin(name: &str, iterations: u32, master_seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            source: TopologySource::Builtin(name.to_string()),
            iterations,
            master_seed,
            root_policy: RootPolicy::Fixed(0),
            overrides: Overrides::default(),
            out_dir: None,
        }
    }
}

pub struct ExperimentOutcome {
    pub topology: PhysicalTopology,
    pub truth: Partition,
    pub ledgers: Vec<TransferLedger>,
    pub graph: MeasurementGraph,
    pub clustering: ClusterResult,
    pub nmi: f64,
    pub trace: Vec<TracePoint>,
}

/// Per-run seed stream; public only in the sense that the report records
/// the derived values.
fn run_seed(master: u64, iteration: u32) -> u64 {
    seeds::derive(master, seeds::STREAM_RUN + iteration as u64)
}

fn cluster_seed(master: u64) -> u64 {
    seeds::derive(master, seeds::STREAM_CLUSTER)
}

pub fn load_topology(source: &TopologySource) -> Result<(PhysicalTopology, Partition)> {
    match source {
        TopologySource::Builtin(name) => scenarios::scenario(name),
        TopologySource::File(path) => parse_document(&fs::read_to_string(path)?),
    }
}

/// Run the full campaign. Fails only on config errors (unknown scenario,
/// unreadable topology, zero iterations) or filesystem trouble.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    if cfg.iterations == 0 {
        return Err(Error::parse("an experiment needs at least one iteration"));
    }
    let (topology, truth) = load_topology(&cfg.source)?;
    let n = topology.node_count() as u32;
    if let RootPolicy::Fixed(root) = cfg.root_policy {
        if root >= n {
            return Err(Error::parse(format!("root {} out of range for {} nodes", root, n)));
        }
    }

    // Builtin scenarios carry a protocol preset tuned to the fluid model;
    // file topologies run the stock configuration.
    let preset = match &cfg.source {
        TopologySource::Builtin(name) => scenarios::preset(name)?,
        TopologySource::File(_) => SwarmConfig::default(),
    };
    let base = SwarmConfig {
        file_size_fragments: cfg.overrides.fragments.unwrap_or(preset.file_size_fragments),
        max_parallel_uploads: cfg.overrides.uploads.unwrap_or(preset.max_parallel_uploads),
        max_peer_set: cfg.overrides.peer_cap.unwrap_or(preset.max_peer_set),
        ..preset
    };

    let ledgers: Vec<TransferLedger> = (0..cfg.iterations)
        .into_par_iter()
        .map(|i| {
            let root = match cfg.root_policy {
                RootPolicy::Fixed(root) => root,
                RootPolicy::Rotate => i % n,
            };
            let run_cfg = SwarmConfig { root, rng_seed: run_seed(cfg.master_seed, i), ..base.clone() };
            run_broadcast(&topology, &run_cfg)
        })
        .collect();

    let graph = metric::aggregate(&ledgers)?;
    let clustering = cluster::louvain(&graph, cluster_seed(cfg.master_seed))?;
    let nmi = eval::nmi(&clustering.partition, &truth)?;
    let trace = eval::convergence_trace(&ledgers, &truth, cluster_seed(cfg.master_seed))?;

    let outcome = ExperimentOutcome { topology, truth, ledgers, graph, clustering, nmi, trace };
    if let Some(dir) = &cfg.out_dir {
        write_bundle(dir, cfg, &outcome)?;
    }
    Ok(outcome)
}

/// Layout: weights.csv, partition.csv, trace.csv, graph.dot, completions.csv,
/// runs/run_NNN.csv, and report.json indexing everything by content digest.
fn write_bundle(dir: &Path, cfg: &ExperimentConfig, out: &ExperimentOutcome) -> Result<()> {
    fs::create_dir_all(dir.join("runs"))?;
    let mut artifacts: Vec<(String, String)> = Vec::new();
    let mut emit = |rel: String, content: String| -> Result<()> {
        fs::write(dir.join(&rel), &content)?;
        artifacts.push((rel, hex_digest(&content)));
        Ok(())
    };

    emit("weights.csv".into(), out.graph.to_csv())?;
    emit("partition.csv".into(), out.clustering.partition.to_csv())?;
    emit("trace.csv".into(), eval::trace_csv(&out.trace))?;
    let names: Vec<String> =
        (0..out.topology.node_count()).map(|v| out.topology.node_name(v).to_string()).collect();
    emit(
        "graph.dot".into(),
        export::to_dot(
            &out.graph,
            &DotOptions { fraction: 0.5, truth: Some(&out.truth), names: Some(&names) },
        )?,
    )?;

    let mut completions = String::from("run,node,completion_seconds\n");
    for (i, ledger) in out.ledgers.iter().enumerate() {
        emit(format!("runs/run_{:03}.csv", i), ledger.to_csv())?;
        for v in 0..ledger.node_count() as u32 {
            completions.push_str(&format!("{},{},{}\n", i, v, ledger.completion_seconds(v)));
        }
    }
    emit("completions.csv".into(), completions)?;

    let report = render_report(cfg, out, &artifacts);
    fs::write(dir.join("report.json"), report)?;
    Ok(())
}

fn hex_digest(content: &str) -> String {
    let mut h = Sha256::new();
    h.update(content.as_bytes());
    format!("{:x}", h.finalize())
}

fn render_report(cfg: &ExperimentConfig, out: &ExperimentOutcome, artifacts: &[(String, String)]) -> String {
    // serde_json maps are BTree-backed, so key order is stable.
    let source = match &cfg.source {
        TopologySource::Builtin(name) => serde_json::json!({"builtin": name}),
        TopologySource::File(path) => serde_json::json!({"file": path.display().to_string()}),
    };
    let root_policy = match cfg.root_policy {
        RootPolicy::Fixed(root) => serde_json::json!({"fixed": root}),
        RootPolicy::Rotate => serde_json::json!("rotate"),
    };
    let artifact_map: serde_json::Map<String, serde_json::Value> = artifacts
        .iter()
        .map(|(rel, digest)| (rel.clone(), serde_json::Value::String(digest.clone())))
        .collect();
    let report = serde_json::json!({
        "source": source,
        "nodes": out.topology.node_count(),
        "iterations": cfg.iterations,
        "master_seed": cfg.master_seed,
        "root_policy": root_policy,
        "overrides": {
            "fragments": cfg.overrides.fragments,
            "uploads": cfg.overrides.uploads,
            "peer_cap": cfg.overrides.peer_cap,
        },
        "result": {
            "nmi": out.nmi,
            "modularity": out.clustering.modularity,
            "clusters": out.clustering.partition.clusters(),
            "levels": out.clustering.levels,
        },
        "artifacts": artifact_map,
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    text
}
