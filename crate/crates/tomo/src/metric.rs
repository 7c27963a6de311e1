//! The tomography measurement: how many fragments crossed each node pair.
//!
//! For one run the weight of the undirected pair {a, b} is the fragment
//! count a sent b plus the count b sent a. Over a campaign the weights are
//! averaged across runs. Sums are kept as exactly-representable integers
//! in f64 and divided by the run count on read, so aggregation order can
//! never perturb the result.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::swarm::TransferLedger;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementGraph {
    nodes: usize,
    runs: u32,
    /// Pair sums, upper triangle only (index a * nodes + b with a < b).
    sums: Vec<f64>,
}

impl MeasurementGraph {
    pub fn new(nodes: usize) -> MeasurementGraph {
        MeasurementGraph { nodes, runs: 0, sums: vec![0.0; nodes * nodes] }
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn runs(&self) -> u32 {
        self.runs
    }

    /// Fold one run into the average.
    pub fn absorb(&mut self, ledger: &TransferLedger) -> Result<()> {
        if ledger.node_count() != self.nodes {
            return Err(Error::NodeCountMismatch { left: self.nodes, right: ledger.node_count() });
        }
        for (s, r, c) in ledger.transfers() {
            let (a, b) = if s < r { (s, r) } else { (r, s) };
            self.sums[a as usize * self.nodes + b as usize] += c as f64;
        }
        self.runs += 1;
        Ok(())
    }

    /// Mean fragments exchanged between a and b per run.
    pub fn weight(&self, a: u32, b: u32) -> f64 {
        if a == b || self.runs == 0 {
            return 0.0;
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.sums[a as usize * self.nodes + b as usize] / self.runs as f64
    }

    /// Nonzero pair weights, sorted by (a, b) with a < b.
    pub fn weights(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        let n = self.nodes;
        let runs = self.runs.max(1) as f64;
        self.sums.iter().enumerate().filter_map(move |(i, &s)| {
            (s > 0.0).then(|| ((i / n) as u32, (i % n) as u32, s / runs))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.sums.iter().filter(|&&s| s > 0.0).count()
    }

    pub fn total_weight(&self) -> f64 {
        if self.runs == 0 {
            return 0.0;
        }
        self.sums.iter().sum::<f64>() / self.runs as f64
    }

    /// `node_a,node_b,weight` rows, sorted, shortest-round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node_a,node_b,weight\n");
        for (a, b, w) in self.weights() {
            let _ = writeln!(out, "{},{},{}", a, b, w);
        }
        out
    }

    /// Parse a weights CSV back into a graph (treated as one run of
    /// already-averaged weights). Node count is one past the highest id
    /// mentioned, or `min_nodes` if larger.
    pub fn from_csv(text: &str, min_nodes: usize) -> Result<MeasurementGraph> {
        let mut rows: Vec<(u32, u32, f64)> = Vec::new();
        let mut nodes = min_nodes;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("node_a")) {
                continue;
            }
            let mut it = line.split(',');
            let bad = || Error::parse(format!("weights row {}: expected node_a,node_b,weight", i + 1));
            let a: u32 = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            let b: u32 = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            let w: f64 = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            if it.next().is_some() {
                return Err(bad());
            }
            if a == b {
                return Err(Error::parse(format!("weights row {}: self-loop on node {}", i + 1, a)));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::parse(format!("weights row {}: weight must be finite and >= 0", i + 1)));
            }
            nodes = nodes.max(a as usize + 1).max(b as usize + 1);
            rows.push((a, b, w));
        }
        let mut g = MeasurementGraph::new(nodes);
        g.runs = 1;
        for (a, b, w) in rows {
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            let cell = &mut g.sums[a as usize * nodes + b as usize];
            if *cell != 0.0 {
                return Err(Error::parse(format!("duplicate weight for pair {},{}", a, b)));
            }
            *cell = w;
        }
        Ok(g)
    }
}

/// Measurement graph of a single run.
pub fn single_run_weights(ledger: &TransferLedger) -> MeasurementGraph {
    let mut g = MeasurementGraph::new(ledger.node_count());
    g.absorb(ledger).expect("node counts match by construction");
    g
}

/// Average the runs of a campaign into one graph.
pub fn aggregate(ledgers: &[TransferLedger]) -> Result<MeasurementGraph> {
    let nodes = ledgers.first().map(|l| l.node_count()).unwrap_or(0);
    let mut g = MeasurementGraph::new(nodes);
    for ledger in ledgers {
        g.absorb(ledger)?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swarm::{run_broadcast, SwarmConfig};
    use crate::topology::{Link, PhysicalTopology, Vertex};

    fn flat(n: usize) -> PhysicalTopology {
        let nodes: Vec<String> = (0..n).map(|i| format!("h{}", i)).collect();
        let links = (0..n)
            .map(|i| Link {
                a: Vertex::Node(i as u32),
                b: Vertex::Switch(0),
                capacity_mbps: 890.0,
                duplex: true,
                flow_cap_mbps: None,
            })
            .collect();
        PhysicalTopology::new(nodes, vec!["sw".into()], links).unwrap()
    }

    fn run(n: usize, seed: u64, fragments: u32) -> TransferLedger {
        let topo = flat(n);
        run_broadcast(&topo, &SwarmConfig {
            file_size_fragments: fragments,
            rng_seed: seed,
            ..SwarmConfig::default()
        })
    }

    #[test]
    fn single_run_weight_is_the_symmetric_fragment_count() {
        let ledger = run(5, 9, 120);
        let g = single_run_weights(&ledger);
        for a in 0..5u32 {
            for b in 0..5u32 {
                let expected = (ledger.count(a, b) + ledger.count(b, a)) as f64;
                assert_eq!(g.weight(a, b), if a == b { 0.0 } else { expected });
            }
        }
    }

    #[test]
    fn total_weight_is_leechers_times_file_size() {
        // Every fragment delivered contributes exactly one unit of pair
        // weight, so the graph total is (n - 1) * fragments per run.
        for seed in [1u64, 2, 3] {
            let g = single_run_weights(&run(6, seed, 150));
            assert_eq!(g.total_weight(), 5.0 * 150.0);
        }
        let ledgers: Vec<TransferLedger> = (0..3).map(|s| run(6, s, 150)).collect();
        let g = aggregate(&ledgers).unwrap();
        assert!((g.total_weight() - 5.0 * 150.0).abs() < 1e-9);
        assert_eq!(g.runs(), 3);
    }

    #[test]
    fn aggregation_averages_across_runs() {
        let a = run(4, 10, 80);
        let b = run(4, 11, 80);
        let g = aggregate(&[a.clone(), b.clone()]).unwrap();
        let ga = single_run_weights(&a);
        let gb = single_run_weights(&b);
        for x in 0..4u32 {
            for y in 0..4u32 {
                assert_eq!(g.weight(x, y), (ga.weight(x, y) + gb.weight(x, y)) / 2.0);
            }
        }
    }

    #[test]
    fn absorb_order_cannot_change_the_graph() {
        let ledgers: Vec<TransferLedger> = (0..4).map(|s| run(5, 20 + s, 100)).collect();
        let fwd = aggregate(&ledgers).unwrap();
        let rev: Vec<TransferLedger> = ledgers.into_iter().rev().collect();
        assert_eq!(fwd, aggregate(&rev).unwrap());
    }

    #[test]
    fn node_count_mismatch_is_an_error() {
        let mut g = MeasurementGraph::new(4);
        let err = g.absorb(&run(5, 1, 60)).unwrap_err();
        assert!(matches!(err, crate::Error::NodeCountMismatch { left: 4, right: 5 }));
    }

    #[test]
    fn csv_round_trips() {
        let g = single_run_weights(&run(5, 33, 90));
        let csv = g.to_csv();
        assert!(csv.starts_with("node_a,node_b,weight\n"));
        let back = MeasurementGraph::from_csv(&csv, 0).unwrap();
        assert_eq!(back.node_count(), 5);
        for a in 0..5u32 {
            for b in 0..5u32 {
                assert_eq!(back.weight(a, b), g.weight(a, b));
            }
        }
        // Fractional averages survive the round trip byte-exactly too.
        let ledgers: Vec<TransferLedger> = (0..3).map(|s| run(5, 40 + s, 90)).collect();
        let g3 = aggregate(&ledgers).unwrap();
        let back3 = MeasurementGraph::from_csv(&g3.to_csv(), 0).unwrap();
        for a in 0..5u32 {
            for b in 0..5u32 {
                assert_eq!(back3.weight(a, b), g3.weight(a, b));
            }
        }
    }

    #[test]
    fn from_csv_rejects_malformed_rows() {
        assert!(MeasurementGraph::from_csv("node_a,node_b,weight\n0,0,5\n", 0).is_err());
        assert!(MeasurementGraph::from_csv("0,1\n", 0).is_err());
        assert!(MeasurementGraph::from_csv("0,1,-2\n", 0).is_err());
        assert!(MeasurementGraph::from_csv("0,1,3\n1,0,4\n", 0).is_err());
        assert!(MeasurementGraph::from_csv("0,1,x\n", 0).is_err());
    }
}
