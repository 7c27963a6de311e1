//! Weighted-modularity clustering of measurement graphs.
//!
//! Modularity of a partition is sum over clusters of
//! `intra_fraction - expected_fraction^2`, where the fractions are taken
//! of total edge-endpoint weight. `louvain` maximizes it greedily: local
//! moves until stable, coarsen communities into supernodes (intra weight
//! becomes a self-loop), repeat, then cut the dendrogram at the level
//! whose flattened partition scores highest on the original graph.
//!
//! The visit order is reshuffled from a seeded generator every pass; given
//! the same seed the result is bit-reproducible. Gain ties break toward
//! the lowest community label, and a move must clear a relative epsilon
//! to prevent oscillation between equal-gain communities.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metric::MeasurementGraph;
use crate::partition::Partition;

#[derive(Debug, Clone)]
pub struct ClusterResult {
    pub partition: Partition,
    pub modularity: f64,
    /// Dendrogram levels built before the cut.
    pub levels: usize,
}

/// Weighted graph in adjacency form; the unit the algorithm works on.
struct WGraph {
    adj: Vec<Vec<(u32, f64)>>,
    self_loop: Vec<f64>,
    /// degree(v) = sum of incident weights + 2 * self_loop(v).
    degree: Vec<f64>,
    /// 2W: sum of all degrees.
    total: f64,
}

impl WGraph {
    fn build(g: &MeasurementGraph) -> Result<WGraph> {
        let n = g.node_count();
        let mut adj = vec![Vec::new(); n];
        for (a, b, w) in g.weights() {
            adj[a as usize].push((b, w));
            adj[b as usize].push((a, w));
        }
        for list in &mut adj {
            list.sort_unstable_by(|x, y| x.0.cmp(&y.0));
        }
        let wg = WGraph::finish(adj, vec![0.0; n])?;
        Ok(wg)
    }

    fn finish(adj: Vec<Vec<(u32, f64)>>, self_loop: Vec<f64>) -> Result<WGraph> {
        let degree: Vec<f64> = adj
            .iter()
            .zip(&self_loop)
            .map(|(list, &s)| list.iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * s)
            .collect();
        let total: f64 = degree.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroWeightGraph);
        }
        Ok(WGraph { adj, self_loop, degree, total })
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn score(&self, p: &Partition) -> f64 {
        let k = p.clusters() as usize;
        let mut intra = vec![0.0f64; k];
        let mut deg = vec![0.0f64; k];
        for v in 0..self.len() {
            let c = p.label(v) as usize;
            deg[c] += self.degree[v];
            intra[c] += self.self_loop[v];
            for &(u, w) in &self.adj[v] {
                if u as usize > v && p.label(u as usize) == c as u32 {
                    intra[c] += w;
                }
            }
        }
        (0..k)
            .map(|c| 2.0 * intra[c] / self.total - (deg[c] / self.total).powi(2))
            .sum()
    }
}

/// Modularity of `partition` on the measurement graph.
pub fn modularity(g: &MeasurementGraph, partition: &Partition) -> Result<f64> {
    if partition.len() != g.node_count() {
        return Err(Error::NodeCountMismatch { left: g.node_count(), right: partition.len() });
    }
    Ok(WGraph::build(g)?.score(partition))
}

/// One round of local moves. Returns the node -> community map if anything
/// moved, None if the graph is already locally stable.
fn one_level(wg: &WGraph, rng: &mut ChaCha8Rng, eps: f64) -> Option<Vec<u32>> {
    let n = wg.len();
    let mut comm: Vec<u32> = (0..n as u32).collect();
    let mut tot = wg.degree.clone();
    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut neigh_w = vec![0.0f64; n];
    let mut touched: Vec<u32> = Vec::new();
    let mut moved_any = false;

    loop {
        order.shuffle(rng);
        let mut moved_pass = false;
        for &u in &order {
            let u = u as usize;
            let cu = comm[u];
            for &(v, w) in &wg.adj[u] {
                let c = comm[v as usize];
                if neigh_w[c as usize] == 0.0 {
                    touched.push(c);
                }
                neigh_w[c as usize] += w;
            }
            touched.sort_unstable();

            let ku = wg.degree[u];
            tot[cu as usize] -= ku;
            let mut best_c = cu;
            let mut best_gain = neigh_w[cu as usize] - ku * tot[cu as usize] / wg.total;
            for &c in &touched {
                if c == cu {
                    continue;
                }
                let gain = neigh_w[c as usize] - ku * tot[c as usize] / wg.total;
                if gain > best_gain + eps {
                    best_gain = gain;
                    best_c = c;
                }
            }
            comm[u] = best_c;
            tot[best_c as usize] += ku;
            if best_c != cu {
                moved_pass = true;
                moved_any = true;
            }

            for &c in &touched {
                neigh_w[c as usize] = 0.0;
            }
            touched.clear();
        }
        if !moved_pass {
            break;
        }
    }
    moved_any.then_some(comm)
}

/// Merge communities into supernodes, keeping intra weight as self-loops.
fn coarsen(wg: &WGraph, labels: &[u32], k: usize) -> WGraph {
    let mut maps: Vec<std::collections::BTreeMap<u32, f64>> = vec![Default::default(); k];
    let mut self_loop = vec![0.0f64; k];
    for v in 0..wg.len() {
        let cv = labels[v];
        self_loop[cv as usize] += wg.self_loop[v];
        for &(u, w) in &wg.adj[v] {
            if (u as usize) <= v {
                continue;
            }
            let cu = labels[u as usize];
            if cu == cv {
                self_loop[cv as usize] += w;
            } else {
                *maps[cv as usize].entry(cu).or_insert(0.0) += w;
                *maps[cu as usize].entry(cv).or_insert(0.0) += w;
            }
        }
    }
    let adj: Vec<Vec<(u32, f64)>> = maps.into_iter().map(|m| m.into_iter().collect()).collect();
    WGraph::finish(adj, self_loop).expect("coarsening preserves total weight")
}

/// Cluster the graph by seeded Louvain and return the best dendrogram cut.
pub fn louvain(g: &MeasurementGraph, seed: u64) -> Result<ClusterResult> {
    let base = WGraph::build(g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-9 * base.total / 2.0;

    let n = g.node_count();
    let mut mapping: Vec<u32> = (0..n as u32).collect();
    let singletons = Partition::from_labels(mapping.iter().copied());
    let mut best = (singletons.clone(), base.score(&singletons));
    let mut levels = 0usize;

    let mut cur = base;
    loop {
        let Some(raw) = one_level(&cur, &mut rng, eps) else { break };
        let level = Partition::from_labels(raw.iter().copied());
        for m in &mut mapping {
            *m = level.label(*m as usize);
        }
        levels += 1;
        let flat = Partition::from_labels(mapping.iter().copied());
        let q = modularity(g, &flat)?;
        if q > best.1 {
            best = (flat, q);
        }
        let k = level.clusters() as usize;
        if k == cur.len() {
            break;
        }
        cur = coarsen(&cur, level.labels(), k);
    }

    Ok(ClusterResult { partition: best.0, modularity: best.1, levels })
}
