//! Command-line front end. The library (and its examples/) is the primary
//! interface; this binary wraps the same entry points for shell pipelines.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{ArgGroup, Parser, Subcommand};

use tomo::experiment::{ExperimentConfig, Overrides, RootPolicy, TopologySource};
use tomo::export::DotOptions;
use tomo::metric::MeasurementGraph;
use tomo::Partition;

#[derive(Parser)]
#[command(
    name = "tomo",
    version,
    about = "Bandwidth tomography via simulated BitTorrent broadcasts",
    long_about = "Simulate synchronized broadcasts over a capacity-constrained topology, \
                  cluster the measured fragment-exchange graph, and score the result.\n\n\
                  The TOMO_SEED environment variable overrides any --seed argument."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a broadcast campaign: simulate, aggregate, cluster, score.
    #[command(group(ArgGroup::new("src").required(true).args(["scenario", "topology"])))]
    Run {
        /// Built-in scenario name (see `tomo scenarios`).
        #[arg(long)]
        scenario: Option<String>,
        /// Topology document (JSON) path.
        #[arg(long)]
        topology: Option<PathBuf>,
        /// Number of broadcast runs.
        #[arg(long, short = 'n', default_value_t = 10)]
        iterations: u32,
        /// Master seed; every random choice in the campaign derives from it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the artifact bundle (weights, partition, trace, DOT,
        /// per-run ledgers, report.json) into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rotate the seeding node across runs instead of fixing it.
        #[arg(long)]
        rotate_root: bool,
        /// Seeding node when not rotating.
        #[arg(long, default_value_t = 0)]
        root: u32,
        /// Override the file size in fragments.
        #[arg(long)]
        fragments: Option<u32>,
        /// Override upload slots per node.
        #[arg(long)]
        uploads: Option<u32>,
        /// Override the peer-set draw size.
        #[arg(long)]
        peer_cap: Option<u32>,
    },
    /// Cluster a weights CSV by weighted modularity.
    Cluster {
        /// weights.csv as produced by `tomo run`.
        #[arg(long)]
        weights: PathBuf,
        /// Score the result against this partition CSV.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Partition CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Normalized mutual information between two partition CSVs.
    Nmi {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Render a weights CSV as an undirected DOT graph.
    ExportDot {
        #[arg(long)]
        weights: PathBuf,
        /// Heaviest fraction of edges to draw, in (0, 1].
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        /// Shape nodes by this partition CSV.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// DOT destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    Scenarios,
}

fn env_seed(flag: u64) -> anyhow::Result<u64> {
    match std::env::var("TOMO_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .with_context(|| format!("TOMO_SEED must be an unsigned integer, got {:?}", s)),
        Err(_) => Ok(flag),
    }
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Run {
            scenario,
            topology,
            iterations,
            seed,
            out,
            rotate_root,
            root,
            fragments,
            uploads,
            peer_cap,
        } => {
            let source = match (scenario, topology) {
                (Some(name), None) => TopologySource::Builtin(name),
                (None, Some(path)) => TopologySource::File(path),
                _ => unreachable!("clap enforces the source group"),
            };
            let cfg = ExperimentConfig {
                source,
                iterations,
                master_seed: env_seed(seed)?,
                root_policy: if rotate_root { RootPolicy::Rotate } else { RootPolicy::Fixed(root) },
                overrides: Overrides { fragments, uploads, peer_cap },
                out_dir: out.clone(),
            };
            let started = std::time::Instant::now();
            let outcome = tomo::experiment::run_experiment(&cfg)?;
            eprintln!("campaign finished in {:.1}s", started.elapsed().as_secs_f64());
            println!(
                "runs={} nmi={:.6} modularity={:.6} clusters={}",
                iterations,
                outcome.nmi,
                outcome.clustering.modularity,
                outcome.clustering.partition.clusters()
            );
            if let Some(dir) = out {
                println!("bundle written to {}", dir.display());
            }
        }
        Cmd::Cluster { weights, truth, seed, out } => {
            let text = fs::read_to_string(&weights)
                .with_context(|| format!("reading {}", weights.display()))?;
            let graph = MeasurementGraph::from_csv(&text, 0)?;
            let result = tomo::cluster::louvain(&graph, env_seed(seed)?)?;
            match truth {
                Some(path) => {
                    let truth = Partition::from_csv(
                        &fs::read_to_string(&path)
                            .with_context(|| format!("reading {}", path.display()))?,
                    )?;
                    if truth.len() != graph.node_count() {
                        bail!(
                            "truth covers {} nodes but the graph has {}",
                            truth.len(),
                            graph.node_count()
                        );
                    }
                    let nmi = tomo::eval::nmi(&result.partition, &truth)?;
                    println!(
                        "modularity={:.6} clusters={} nmi={:.6}",
                        result.modularity,
                        result.partition.clusters(),
                        nmi
                    );
                }
                None => println!(
                    "modularity={:.6} clusters={}",
                    result.modularity,
                    result.partition.clusters()
                ),
            }
            let csv = result.partition.to_csv();
            match out {
                Some(path) => fs::write(&path, csv)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{}", csv),
            }
        }
        Cmd::Nmi { a, b } => {
            let pa = Partition::from_csv(
                &fs::read_to_string(&a).with_context(|| format!("reading {}", a.display()))?,
            )?;
            let pb = Partition::from_csv(
                &fs::read_to_string(&b).with_context(|| format!("reading {}", b.display()))?,
            )?;
            println!("{:.6}", tomo::eval::nmi(&pa, &pb)?);
        }
        Cmd::ExportDot { weights, fraction, truth, out } => {
            let text = fs::read_to_string(&weights)
                .with_context(|| format!("reading {}", weights.display()))?;
            let graph = MeasurementGraph::from_csv(&text, 0)?;
            let truth = truth
                .map(|p| -> anyhow::Result<Partition> {
                    Ok(Partition::from_csv(&fs::read_to_string(&p)?)?)
                })
                .transpose()?;
            if let Some(t) = &truth {
                if t.len() != graph.node_count() {
                    bail!(
                        "truth covers {} nodes but the graph has {}",
                        t.len(),
                        graph.node_count()
                    );
                }
            }
            let dot = tomo::export::to_dot(
                &graph,
                &DotOptions { fraction, truth: truth.as_ref(), names: None },
            )?;
            match out {
                Some(path) => fs::write(&path, dot)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{}", dot),
            }
        }
        Cmd::Scenarios => {
            for s in tomo::scenarios::SCENARIOS {
                println!("{:6} {:3} nodes, {} clusters: {}", s.name, s.nodes, s.clusters, s.summary);
            }
        }
    }
    Ok(())
}
