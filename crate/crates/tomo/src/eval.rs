//! Scoring recovered partitions against ground truth.
//!
//! The score is normalized mutual information with max normalization:
//! `I(X;Y) / max(H(X), H(Y))`, natural logarithms. Degenerate cases are
//! pinned: two all-in-one partitions agree perfectly (1.0), an all-in-one
//! partition against a split one carries no information (0.0).

use std::fmt::Write as _;

use crate::cluster;
use crate::error::{Error, Result};
use crate::metric::MeasurementGraph;
use crate::partition::Partition;
use crate::swarm::TransferLedger;

/// Normalized mutual information between two partitions of the same nodes.
pub fn nmi(x: &Partition, y: &Partition) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::NodeCountMismatch { left: x.len(), right: y.len() });
    }
    let n = x.len();
    if n == 0 {
        return Err(Error::parse("cannot score empty partitions"));
    }
    let kx = x.clusters() as usize;
    let ky = y.clusters() as usize;
    if kx == 1 && ky == 1 {
        return Ok(1.0);
    }
    if kx == 1 || ky == 1 {
        return Ok(0.0);
    }

    let mut joint = vec![0u64; kx * ky];
    let mut row = vec![0u64; kx];
    let mut col = vec![0u64; ky];
    for v in 0..n {
        let (a, b) = (x.label(v) as usize, y.label(v) as usize);
        joint[a * ky + b] += 1;
        row[a] += 1;
        col[b] += 1;
    }

    let nf = n as f64;
    let mut info = 0.0;
    for a in 0..kx {
        for b in 0..ky {
            let nij = joint[a * ky + b];
            if nij == 0 {
                continue;
            }
            let nij = nij as f64;
            info += nij / nf * (nf * nij / (row[a] as f64 * col[b] as f64)).ln();
        }
    }
    let entropy = |counts: &[u64]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / nf;
                -p * p.ln()
            })
            .sum()
    };
    let denom = entropy(&row).max(entropy(&col));
    // kx, ky >= 2 here, so both entropies are positive.
    Ok((info / denom).clamp(0.0, 1.0))
}

/// Quality of the clustering after each prefix of the campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub runs: u32,
    pub nmi: f64,
    pub modularity: f64,
    pub clusters: u32,
}

/// Cluster the aggregate of runs 1..=i for every i and score against
/// truth. The same clustering seed is reused at every prefix so the trace
/// isolates the effect of additional measurements.
pub fn convergence_trace(
    ledgers: &[TransferLedger],
    truth: &Partition,
    cluster_seed: u64,
) -> Result<Vec<TracePoint>> {
    let nodes = truth.len();
    let mut g = MeasurementGraph::new(nodes);
    let mut trace = Vec::with_capacity(ledgers.len());
    for (i, ledger) in ledgers.iter().enumerate() {
        g.absorb(ledger)?;
        let r = cluster::louvain(&g, cluster_seed)?;
        trace.push(TracePoint {
            runs: i as u32 + 1,
            nmi: nmi(&r.partition, truth)?,
            modularity: r.modularity,
            clusters: r.partition.clusters(),
        });
    }
    Ok(trace)
}

/// `n,nmi,modularity,k` rows, floats at fixed six decimals.
pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("n,nmi,modularity,k\n");
    for p in trace {
        let _ = writeln!(out, "{},{:.6},{:.6},{}", p.runs, p.nmi, p.modularity, p.clusters);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(labels: &[u32]) -> Partition {
        Partition::from_labels(labels.iter().copied())
    }

    #[test]
    fn identical_partitions_score_one() {
        let p = part(&[0, 0, 1, 1, 2, 2]);
        assert_eq!(nmi(&p, &p).unwrap(), 1.0);
        // Label names are irrelevant, only the grouping counts.
        let q = part(&[5, 5, 9, 9, 1, 1]);
        assert_eq!(nmi(&p, &q).unwrap(), 1.0);
    }

    #[test]
    fn independent_partitions_score_zero() {
        // Two splits of four nodes that share no information: every joint
        // cell holds exactly one node.
        let x = part(&[0, 0, 1, 1]);
        let y = part(&[0, 1, 0, 1]);
        assert!(nmi(&x, &y).unwrap().abs() < 1e-15);
    }

    #[test]
    fn degenerate_cases_are_pinned() {
        let one = Partition::single_cluster(6);
        let split = part(&[0, 0, 0, 1, 1, 1]);
        assert_eq!(nmi(&one, &one).unwrap(), 1.0);
        assert_eq!(nmi(&one, &split).unwrap(), 0.0);
        assert_eq!(nmi(&split, &one).unwrap(), 0.0);
    }

    #[test]
    fn nmi_is_symmetric_and_bounded() {
        let x = part(&[0, 0, 1, 1, 2, 2, 0, 1]);
        let y = part(&[0, 1, 1, 1, 2, 0, 0, 2]);
        let a = nmi(&x, &y).unwrap();
        let b = nmi(&y, &x).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&a));
        assert!(a > 0.0 && a < 1.0, "partial overlap scores strictly between");
    }

    #[test]
    fn max_normalization_uses_the_larger_entropy() {
        // x refines y: I = H(y), so NMI = H(y) / H(x) < 1.
        let x = part(&[0, 1, 2, 3]);
        let y = part(&[0, 0, 1, 1]);
        let hx = 4.0f64.ln();
        let hy = 2.0f64.ln();
        let got = nmi(&x, &y).unwrap();
        assert!((got - hy / hx).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let x = part(&[0, 1]);
        let y = part(&[0, 1, 1]);
        assert!(matches!(nmi(&x, &y), Err(Error::NodeCountMismatch { left: 2, right: 3 })));
    }

    #[test]
    fn trace_csv_has_fixed_precision_rows() {
        let trace = vec![
            TracePoint { runs: 1, nmi: 0.5, modularity: 0.25, clusters: 3 },
            TracePoint { runs: 2, nmi: 1.0, modularity: 1.0 / 3.0, clusters: 2 },
        ];
        let csv = trace_csv(&trace);
        assert_eq!(csv, "n,nmi,modularity,k\n1,0.500000,0.250000,3\n2,1.000000,0.333333,2\n");
    }
}
