//! Peer-set construction and unchoke selection.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Uniform random peer draw: `min(cap, n-1)` distinct peers excluding
/// `node`, returned sorted.
pub(crate) fn draw_peer_set(node: u32, n: u32, cap: u32, rng: &mut impl Rng) -> Vec<u32> {
    let want = cap.min(n - 1) as usize;
    let mut others: Vec<u32> = (0..n).filter(|&i| i != node).collect();
    // Partial Fisher-Yates: the first `want` slots end up a uniform sample.
    for i in 0..want {
        let j = rng.gen_range(i..others.len());
        others.swap(i, j);
    }
    others.truncate(want);
    others.sort_unstable();
    others
}

/// Symmetrize drawn sets: if a drew b, b also peers with a. Sets may exceed
/// the draw cap afterwards but never `n-1`.
pub(crate) fn symmetrize(drawn: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let n = drawn.len();
    let mut adj = vec![Vec::new(); n];
    for (a, set) in drawn.iter().enumerate() {
        for &b in set {
            adj[a].push(b);
            adj[b as usize].push(a as u32);
        }
    }
    for set in &mut adj {
        set.sort_unstable();
        set.dedup();
    }
    adj
}

pub(crate) fn is_connected(adj: &[Vec<u32>]) -> bool {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut found = 1;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w as usize] {
                seen[w as usize] = true;
                found += 1;
                stack.push(w as usize);
            }
        }
    }
    found == n
}

/// Draw all peer sets from per-node streams and symmetrize. The symmetrized
/// graph is redrawn (bounded) in the unlikely event it comes out
/// disconnected, which would stall the broadcast.
pub(crate) fn build_peer_sets(n: u32, cap: u32, node_rngs: &mut [ChaCha8Rng]) -> Vec<Vec<u32>> {
    for _attempt in 0..32 {
        let drawn: Vec<Vec<u32>> = (0..n)
            .map(|v| draw_peer_set(v, n, cap, &mut node_rngs[v as usize]))
            .collect();
        let adj = symmetrize(&drawn);
        if is_connected(&adj) {
            return adj;
        }
    }
    panic!("peer graph stayed disconnected after 32 redraws; max_peer_set is too small");
}

/// One node's unchoke decision at a choke round.
///
/// `candidates` are the interested peers as `(peer id, transferred bytes in
/// the closing window)`; the meaning of the byte count (received from the
/// peer for a leecher, sent to it for a seed) is the caller's business.
/// The top `max_uploads - optimistic` by bytes win regular slots (ties to
/// the lower id), then `optimistic` slots go uniformly at random to the
/// remaining candidates. Returns a sorted set of at most `max_uploads` ids.
pub(crate) fn select_unchoked(
    candidates: &mut Vec<(u32, u64)>,
    max_uploads: u32,
    optimistic: u32,
    rng: &mut impl Rng,
) -> Vec<u32> {
    let max_uploads = max_uploads as usize;
    if candidates.len() <= max_uploads {
        let mut all: Vec<u32> = candidates.iter().map(|&(id, _)| id).collect();
        all.sort_unstable();
        return all;
    }
    let optimistic = (optimistic as usize).min(max_uploads);
    let regular = max_uploads - optimistic;
    candidates.sort_unstable_by_key(|&(id, bytes)| (std::cmp::Reverse(bytes), id));
    let mut chosen: Vec<u32> = candidates[..regular].iter().map(|&(id, _)| id).collect();
    let rest = &mut candidates[regular..];
    for i in 0..optimistic {
        let j = rng.gen_range(i..rest.len());
        rest.swap(i, j);
        chosen.push(rest[i].0);
    }
    chosen.sort_unstable();
    chosen
}
