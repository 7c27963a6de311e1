//! Event loop for the broadcast simulator.
//!
//! The only events are fragment completions and choke rounds; everything
//! else (interest changes, slot refills, flow starts and aborts) happens
//! synchronously inside an event handler. Flow rates are recomputed only
//! when the set of active flows changes, which keeps the max-min solver
//! off the per-fragment hot path: a continuation of the same transfer
//! keeps its rate.
//!
//! Stale heap entries are skipped by epoch: every reschedule of a flow
//! slot bumps the slot's epoch, so an entry whose epoch lags is dead.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand_chacha::ChaCha8Rng;

use super::peers;
use super::pieces::{meta_table, Bits, PieceTracker};
use super::rates::{max_min_rates, FlowSpec};
use super::{SwarmConfig, TransferLedger};
use crate::seeds;
use crate::topology::PhysicalTopology;

const NO_FLOW: u32 = u32::MAX;
const NOT_PEER: u16 = u16::MAX;

struct Entry {
    t: f64,
    seq: u64,
    /// Flow slot, or `CHOKE_ROUND`.
    flow: u32,
    epoch: u32,
}

const CHOKE_ROUND: u32 = u32::MAX;

impl PartialEq for Entry {
    fn eq(&self, other: &Entry) -> bool {
        self.t == other.t && self.seq == other.seq
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Entry) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Entry) -> Ordering {
        // BinaryHeap is a max-heap; invert for earliest-first.
        other
            .t
            .total_cmp(&self.t)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Flow {
    sender: u32,
    receiver: u32,
    fragment: u32,
    /// Bytes left of the current fragment.
    remaining: f64,
    /// Bytes per second under the current allocation.
    rate: f64,
    last_update: f64,
    /// Monotone per slot, never reset on reuse.
    epoch: u32,
    active_pos: u32,
}

pub(super) struct Sim<'a> {
    cfg: &'a SwarmConfig,
    n: usize,
    frag_bytes: f64,

    // Routing, fixed for the run. A bucket is one capacity-constrained
    // direction of a link; pair_buckets[s * n + r] lists the buckets the
    // flow s->r loads, pair_cap is its per-flow ceiling in bytes/s.
    bucket_cap: Vec<f64>,
    pair_buckets: Vec<Vec<u32>>,
    pair_cap: Vec<f64>,

    peers: Vec<Vec<u32>>,
    /// peer_pos[a * n + b] = index of b in peers[a], NOT_PEER otherwise.
    peer_pos: Vec<u16>,
    /// peer_refs[r][i] packs peers[r][i] in the low half and the position
    /// of r within that peer's own list in the high half, so the delivery
    /// cascade reads both from one sequential stream.
    peer_refs: Vec<Vec<u32>>,
    rngs: Vec<ChaCha8Rng>,

    have: Vec<Bits>,
    trackers: Vec<PieceTracker>,
    /// Shared fragment-major rarity table the trackers work against; see
    /// `pieces::meta_table`.
    piece_meta: Vec<u64>,
    complete: Vec<bool>,
    incomplete_left: u32,
    /// useful[s * n + r] = fragments s holds that r lacks; in-flight
    /// fragments still count as lacking, so a pair with an active flow
    /// always stays useful.
    useful: Vec<u32>,
    /// Bytes delivered s->r in the current choke window.
    window: Vec<u64>,
    unchoked: Vec<bool>,
    unchoked_count: Vec<u32>,
    /// Senders currently unchoking this receiver, sorted.
    unchoked_by: Vec<Vec<u32>>,
    flow_of: Vec<u32>,
    /// Fragments each receiver is currently downloading.
    inflight: Vec<Vec<u32>>,
    /// min_level[s * n + r]: proven floor for the shared-level scan when r
    /// picks from s — no eligible fragment sits below it. Lowered when s
    /// gains a fragment r lacks, raised to the found level by each pick,
    /// reset across all senders when an abort returns a fragment to the
    /// pool. Keyed by sender first so the delivery cascade, which lowers
    /// floors for one sender towards many receivers, writes a single row.
    min_level: Vec<u16>,

    flows: Vec<Flow>,
    free_flows: Vec<u32>,
    active: Vec<u32>,
    rates_dirty: bool,
    /// Reusable buffer for the word-scan fallback in fragment picks.
    pick_scratch: Vec<u64>,

    heap: BinaryHeap<Entry>,
    seq: u64,
    now: f64,

    counts: Vec<u32>,
    completion: Vec<f64>,

    #[cfg(debug_assertions)]
    debug_picks: u64,
}

impl<'a> Sim<'a> {
    pub(super) fn new(topo: &PhysicalTopology, cfg: &'a SwarmConfig) -> Sim<'a> {
        let n = topo.node_count();
        let root = cfg.root as usize;

        let mut rngs: Vec<ChaCha8Rng> = (0..n as u64)
            .map(|v| seeds::rng(cfg.rng_seed, v))
            .collect();
        let peers = peers::build_peer_sets(n as u32, cfg.max_peer_set, &mut rngs);

        let mut peer_pos = vec![NOT_PEER; n * n];
        for (a, set) in peers.iter().enumerate() {
            for (pos, &b) in set.iter().enumerate() {
                peer_pos[a * n + b as usize] = pos as u16;
            }
        }
        let peer_refs = peers
            .iter()
            .enumerate()
            .map(|(a, set)| {
                set.iter()
                    .map(|&b| b | (peer_pos[b as usize * n + a] as u32) << 16)
                    .collect()
            })
            .collect();

        let m = cfg.file_size_fragments;
        let mut piece_meta = meta_table(m, n as u32);
        let mut have = Vec::with_capacity(n);
        let mut trackers = Vec::with_capacity(n);
        for v in 0..n {
            if v == root {
                have.push(Bits::full(m));
                trackers.push(PieceTracker::complete(
                    &mut piece_meta,
                    m,
                    peers[v].len(),
                    v as u32,
                    n as u32,
                ));
            } else {
                have.push(Bits::new(m));
                trackers.push(PieceTracker::new(m, peers[v].len(), v as u32, n as u32));
            }
        }

        let mut complete = vec![false; n];
        complete[root] = true;
        let mut completion = vec![f64::NAN; n];
        completion[root] = 0.0;

        // Announce the root's full holdings to its neighborhood.
        let mut useful = vec![0u32; n * n];
        for &q in &peers[root] {
            let q = q as usize;
            let root_pos = peer_pos[q * n + root];
            for k in 0..m {
                trackers[q].peer_gained(&mut piece_meta, k, root_pos);
            }
            useful[root * n + q] = m;
        }

        let (bucket_cap, pair_buckets, pair_cap) = build_route_table(topo);

        Sim {
            cfg,
            n,
            frag_bytes: cfg.fragment_size_bytes as f64,
            bucket_cap,
            pair_buckets,
            pair_cap,
            peers,
            peer_pos,
            peer_refs,
            rngs,
            have,
            trackers,
            piece_meta,
            complete,
            incomplete_left: n as u32 - 1,
            useful,
            window: vec![0; n * n],
            unchoked: vec![false; n * n],
            unchoked_count: vec![0; n],
            unchoked_by: vec![Vec::new(); n],
            flow_of: vec![NO_FLOW; n * n],
            inflight: vec![Vec::new(); n],
            min_level: vec![2; n * n],
            flows: Vec::new(),
            free_flows: Vec::new(),
            active: Vec::new(),
            rates_dirty: false,
            pick_scratch: Vec::new(),
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            counts: vec![0; n * n],
            completion,
            #[cfg(debug_assertions)]
            debug_picks: 0,
        }
    }

    pub(super) fn run(mut self) -> TransferLedger {
        self.push_event(0.0, CHOKE_ROUND, 0);
        let mut stats = [0u64; 4]; // deliveries, recomputes, active-sum, stale
        let sitediv: Option<usize> = std::env::var("TOMO_SIM_SITEDIV").ok().and_then(|s| s.parse().ok());
        // [class][metric]: class 0 local, 1 cross; metrics: fragments,
        // est. busy seconds (bytes/rate at delivery), slot assignments.
        let mut diag = [[0f64; 3]; 2];
        let mut cross_active = (0u64, 0u64); // sum over recomputes, samples
        while self.incomplete_left > 0 {
            let e = self.heap.pop().expect("choke rounds keep the queue nonempty");
            if e.flow == CHOKE_ROUND {
                self.now = e.t;
                self.choke_round();
                let next = e.t + self.cfg.unchoke_period;
                self.push_event(next, CHOKE_ROUND, 0);
            } else {
                if self.flows[e.flow as usize].epoch != e.epoch {
                    stats[3] += 1;
                    continue;
                }
                self.now = e.t;
                stats[0] += 1;
                if let Some(div) = sitediv {
                    let f = &self.flows[e.flow as usize];
                    let c = ((f.sender as usize / div) != (f.receiver as usize / div)) as usize;
                    diag[c][0] += 1.0;
                    diag[c][1] += self.frag_bytes / f.rate;
                }
                self.deliver(e.flow);
            }
            if self.rates_dirty {
                stats[1] += 1;
                stats[2] += self.active.len() as u64;
                if let Some(div) = sitediv {
                    cross_active.0 += self
                        .active
                        .iter()
                        .filter(|&&fi| {
                            let f = &self.flows[fi as usize];
                            (f.sender as usize / div) != (f.receiver as usize / div)
                        })
                        .count() as u64;
                    cross_active.1 += 1;
                }
                self.recompute_rates();
                self.rates_dirty = false;
            }
        }
        if let Some(div) = sitediv {
            let _ = div;
            eprintln!(
                "diag: local frags={:.0} busy_s={:.1} rate={:.0}Mbps | cross frags={:.0} busy_s={:.1} rate={:.0}Mbps | avg_active={:.1} avg_cross_active={:.1} final_t={:.3}",
                diag[0][0],
                diag[0][1],
                diag[0][0] * self.frag_bytes * 8.0 / diag[0][1] / 1e6,
                diag[1][0],
                diag[1][1],
                diag[1][0] * self.frag_bytes * 8.0 / diag[1][1] / 1e6,
                stats[2] as f64 / stats[1].max(1) as f64,
                cross_active.0 as f64 / cross_active.1.max(1) as f64,
                self.now,
            );
        } else if std::env::var("TOMO_SIM_STATS").is_ok() {
            eprintln!(
                "sim stats: deliveries={} recomputes={} avg_active={:.1} stale={} final_t={:.3}",
                stats[0],
                stats[1],
                stats[2] as f64 / stats[1].max(1) as f64,
                stats[3],
                self.now,
            );
        }
        TransferLedger::new(self.n, self.cfg.root, self.counts, self.completion)
    }

    fn push_event(&mut self, t: f64, flow: u32, epoch: u32) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Entry { t, seq, flow, epoch });
    }

    /// A fragment finished arriving: update holdings, propagate interest
    /// changes, then either continue the transfer or tear the flow down.
    fn deliver(&mut self, fi: u32) {
        let n = self.n;
        let (s, r, k) = {
            let f = &self.flows[fi as usize];
            (f.sender as usize, f.receiver as usize, f.fragment)
        };

        self.counts[s * n + r] += 1;
        self.window[s * n + r] += self.cfg.fragment_size_bytes as u64;
        let pos = self.inflight[r].iter().position(|&x| x == k).expect("fragment was in flight");
        self.inflight[r].swap_remove(pos);
        debug_assert!(!self.have[r].get(k), "no fragment is delivered twice");
        debug_assert!(!self.trackers[r].has(&self.piece_meta, k));
        self.have[r].set(k);
        self.trackers[r].self_gained(&mut self.piece_meta, k);

        // Let r's neighborhood react to the gain: r becomes useful to
        // peers lacking k, and peers already holding k may stop being
        // useful to r. Whether q lacks k falls out of its tracker update
        // (completed peers hold everything), sparing a separate bitfield
        // probe per peer.
        let mut refill_pending: Vec<u32> = Vec::new();
        let mut start_pending: Vec<(u32, u32)> = Vec::new();
        for i in 0..self.peer_refs[r].len() {
            let packed = self.peer_refs[r][i];
            let q = (packed & 0xFFFF) as usize;
            let gain = if self.complete[q] {
                None
            } else {
                self.trackers[q].peer_gained(&mut self.piece_meta, k, (packed >> 16) as u16)
            };
            if let Some(g) = gain {
                // q lacks k, which just became reachable at a new level:
                // lower q's scan floor towards r, and towards the former
                // single holder when the fragment left a private level-1
                // bucket for the shared levels.
                if g.new_level >= 2 {
                    let ml = &mut self.min_level[r * n + q];
                    *ml = (*ml).min(g.new_level);
                    if let Some(h_pos) = g.displaced_single {
                        let h = self.peers[q][h_pos as usize] as usize;
                        let ml = &mut self.min_level[h * n + q];
                        *ml = (*ml).min(g.new_level);
                    }
                }
                self.useful[r * n + q] += 1;
                if self.unchoked[r * n + q] && self.flow_of[r * n + q] == NO_FLOW {
                    // An idle unchoke (dry pair or all-in-flight) may have
                    // just been unblocked.
                    start_pending.push((r as u32, q as u32));
                } else if self.useful[r * n + q] == 1 {
                    // r may now fill a free slot with q.
                    refill_pending.push(r as u32);
                }
            } else {
                // q has k too, so r's gain cost q one useful fragment
                // towards r. A pair running dry keeps its unchoke and
                // merely idles: slots are reallocated at choke rounds and
                // on receiver completion, not on momentary uselessness.
                // Reassigning dry slots would ratchet them towards
                // always-complementary remote peers and away from
                // same-neighborhood peers whose holdings overlap.
                self.useful[q * n + r] -= 1;
            }
        }

        if self.trackers[r].missing() == 0 {
            self.finish_node(r, fi, &mut refill_pending);
        } else {
            self.continue_or_close(fi, s, r, &mut refill_pending);
        }

        // r's in-flight set shrank, so senders stalled on r get a retry.
        if !self.complete[r] {
            for i in 0..self.unchoked_by[r].len() {
                let x = self.unchoked_by[r][i] as usize;
                if self.flow_of[x * n + r] == NO_FLOW {
                    start_pending.push((x as u32, r as u32));
                }
            }
        }

        start_pending.sort_unstable();
        start_pending.dedup();
        for (a, b) in start_pending {
            self.try_start(a as usize, b as usize);
        }
        refill_pending.sort_unstable();
        refill_pending.dedup();
        for v in refill_pending {
            self.refill(v as usize);
        }
    }

    /// Node r holds the whole file: record the time and detach it as a
    /// receiver. It keeps serving as a sender.
    fn finish_node(&mut self, r: usize, fi: u32, refill_pending: &mut Vec<u32>) {
        let n = self.n;
        self.complete[r] = true;
        self.incomplete_left -= 1;
        self.completion[r] = self.now;
        self.close_flow(fi);

        let watchers = std::mem::take(&mut self.unchoked_by[r]);
        for &x in &watchers {
            let x = x as usize;
            let f = self.flow_of[x * n + r];
            if f != NO_FLOW {
                self.abort_flow(f);
            }
            debug_assert!(self.unchoked[x * n + r]);
            self.unchoked[x * n + r] = false;
            self.unchoked_count[x] -= 1;
            refill_pending.push(x as u32);
        }
        debug_assert!(self.inflight[r].is_empty());
    }

    /// The pair (s, r) just finished a fragment; keep the flow running on
    /// the next pick if the unchoke survived, otherwise release the slot.
    fn continue_or_close(&mut self, fi: u32, s: usize, r: usize, refill_pending: &mut Vec<u32>) {
        let n = self.n;
        if self.unchoked[s * n + r] {
            if let Some(k) = self.pick_fragment(s, r) {
                self.inflight[r].push(k);
                let f = &mut self.flows[fi as usize];
                f.fragment = k;
                f.remaining = self.frag_bytes;
                f.last_update = self.now;
                f.epoch += 1;
                let t = self.now + f.remaining / f.rate;
                let epoch = f.epoch;
                self.push_event(t, fi, epoch);
                return;
            }
            // Unchoke stays; the pair idles — dry, or all its candidates
            // merely in flight — until a restart hook fires: s gaining a
            // fragment r lacks, r's in-flight set shrinking, or the next
            // choke round.
            self.close_flow(fi);
        } else {
            self.close_flow(fi);
            refill_pending.push(s as u32);
        }
    }

    /// Remove a finished flow from the active set without touching the
    /// protocol state (unchokes, inflight).
    fn close_flow(&mut self, fi: u32) {
        let f = &mut self.flows[fi as usize];
        f.epoch += 1;
        let pos = f.active_pos as usize;
        let pair = f.sender as usize * self.n + f.receiver as usize;
        self.flow_of[pair] = NO_FLOW;
        let last = self.active.pop().expect("active flow present");
        if pos < self.active.len() {
            self.active[pos] = last;
            self.flows[last as usize].active_pos = pos as u32;
        } else {
            debug_assert_eq!(last, fi);
        }
        self.free_flows.push(fi);
        self.rates_dirty = true;
    }

    /// Abort an in-progress transfer: the partial fragment is lost.
    fn abort_flow(&mut self, fi: u32) {
        let (r, k) = {
            let f = &self.flows[fi as usize];
            (f.receiver as usize, f.fragment)
        };
        let pos = self.inflight[r].iter().position(|&x| x == k).expect("fragment was in flight");
        self.inflight[r].swap_remove(pos);
        // The fragment is pickable again at whatever level it sits now, so
        // r's scan floors are no longer proven. Reset them for every sender.
        for x in 0..self.n {
            self.min_level[x * self.n + r] = 2;
        }
        self.close_flow(fi);
    }

    fn pick_fragment(&mut self, s: usize, r: usize) -> Option<u32> {
        let n = self.n;
        let sender_pos = self.peer_pos[r * n + s];
        debug_assert_ne!(sender_pos, NOT_PEER);
        let start = self.min_level[s * n + r];
        #[cfg(debug_assertions)]
        {
            // Sampled floor audit: a wrong floor would silently weaken
            // rarest-first, so spot-check it against the ground truth.
            self.debug_picks = self.debug_picks.wrapping_add(1);
            if self.debug_picks % 1024 == 0 {
                assert!(
                    self.trackers[r].no_eligible_below(&self.have[s], &self.inflight[r], start),
                    "scan floor {} for pair ({}, {}) skipped an eligible level",
                    start,
                    s,
                    r
                );
            }
        }
        let picked = self.trackers[r].pick(
            &self.piece_meta,
            sender_pos,
            &self.have[s],
            &self.inflight[r],
            start,
            &mut self.pick_scratch,
            &mut self.rngs[r],
        );
        match picked {
            Some((k, lvl)) => {
                if lvl >= 2 {
                    self.min_level[s * n + r] = lvl;
                }
                Some(k)
            }
            None => {
                self.min_level[s * n + r] = u16::MAX;
                None
            }
        }
    }

    fn unchoke(&mut self, s: usize, r: usize) {
        debug_assert!(!self.unchoked[s * self.n + r]);
        self.unchoked[s * self.n + r] = true;
        self.unchoked_count[s] += 1;
        debug_assert!(self.unchoked_count[s] <= self.cfg.max_parallel_uploads);
        let by = &mut self.unchoked_by[r];
        let at = by.partition_point(|&x| x < s as u32);
        by.insert(at, s as u32);
    }

    fn revoke(&mut self, s: usize, r: usize) {
        debug_assert!(self.unchoked[s * self.n + r]);
        self.unchoked[s * self.n + r] = false;
        self.unchoked_count[s] -= 1;
        let by = &mut self.unchoked_by[r];
        let at = by.binary_search(&(s as u32)).expect("unchoked_by mirrors unchoked");
        by.remove(at);
    }

    /// Start a transfer on an existing unchoke if a fragment is available.
    fn try_start(&mut self, s: usize, r: usize) -> bool {
        let n = self.n;
        debug_assert!(self.unchoked[s * n + r]);
        debug_assert_eq!(self.flow_of[s * n + r], NO_FLOW);
        if self.complete[r] {
            return false;
        }
        let Some(k) = self.pick_fragment(s, r) else { return false };
        self.inflight[r].push(k);
        let fi = match self.free_flows.pop() {
            Some(fi) => {
                let f = &mut self.flows[fi as usize];
                f.sender = s as u32;
                f.receiver = r as u32;
                f.fragment = k;
                f.remaining = self.frag_bytes;
                f.rate = 0.0;
                f.last_update = self.now;
                f.epoch += 1;
                fi
            }
            None => {
                self.flows.push(Flow {
                    sender: s as u32,
                    receiver: r as u32,
                    fragment: k,
                    remaining: self.frag_bytes,
                    rate: 0.0,
                    last_update: self.now,
                    epoch: 1,
                    active_pos: 0,
                });
                (self.flows.len() - 1) as u32
            }
        };
        self.flows[fi as usize].active_pos = self.active.len() as u32;
        self.active.push(fi);
        self.flow_of[s * n + r] = fi;
        self.rates_dirty = true;
        true
    }

    /// Fill free upload slots of s with uniformly random interested peers.
    /// Only peers that can start a transfer right now are kept; an
    /// unchoke that cannot move data would waste the slot.
    fn refill(&mut self, s: usize) {
        let n = self.n;
        if self.unchoked_count[s] >= self.cfg.max_parallel_uploads {
            return;
        }
        let mut candidates: Vec<u32> = Vec::new();
        for i in 0..self.peers[s].len() {
            let r = self.peers[s][i] as usize;
            if !self.complete[r] && !self.unchoked[s * n + r] && self.useful[s * n + r] > 0 {
                candidates.push(r as u32);
            }
        }
        while self.unchoked_count[s] < self.cfg.max_parallel_uploads && !candidates.is_empty() {
            let i = rand::Rng::gen_range(&mut self.rngs[s], 0..candidates.len());
            let r = candidates.swap_remove(i) as usize;
            if self.pick_would_succeed(s, r) {
                self.unchoke(s, r);
                let started = self.try_start(s, r);
                debug_assert!(started);
            }
        }
    }

    fn pick_would_succeed(&self, s: usize, r: usize) -> bool {
        // Cheap pre-check without consuming randomness: r must lack
        // something s holds that is not already in flight.
        let lacking = self.useful[s * self.n + r] as usize;
        if lacking == 0 {
            return false;
        }
        if self.inflight[r].is_empty() {
            return true;
        }
        if lacking > self.inflight[r].len() {
            return true;
        }
        self.inflight[r]
            .iter()
            .filter(|&&k| self.have[s].get(k))
            .count()
            < lacking
    }

    /// Rate-based reciprocation: every `unchoke_period` each node ranks
    /// its interested peers by bytes moved in the closing window (upload
    /// to the peer once this node has the file, download from it before)
    /// and keeps the top slots, plus optimistic random ones.
    fn choke_round(&mut self) {
        let n = self.n;
        for v in 0..n {
            let mut candidates: Vec<(u32, u64)> = Vec::new();
            for i in 0..self.peers[v].len() {
                let r = self.peers[v][i] as usize;
                if self.complete[r] || self.useful[v * n + r] == 0 {
                    continue;
                }
                let bytes = if self.complete[v] {
                    self.window[v * n + r]
                } else {
                    self.window[r * n + v]
                };
                candidates.push((r as u32, bytes));
            }
            let keep = peers::select_unchoked(
                &mut candidates,
                self.cfg.max_parallel_uploads,
                self.cfg.optimistic_slots,
                &mut self.rngs[v],
            );

            let mut drop: Vec<usize> = Vec::new();
            for i in 0..self.peers[v].len() {
                let r = self.peers[v][i] as usize;
                if self.unchoked[v * n + r] && keep.binary_search(&(r as u32)).is_err() {
                    drop.push(r);
                }
            }
            for r in drop {
                let f = self.flow_of[v * n + r];
                if f != NO_FLOW {
                    self.abort_flow(f);
                }
                self.revoke(v, r);
            }
            for &r in &keep {
                let r = r as usize;
                if !self.unchoked[v * n + r] {
                    self.unchoke(v, r);
                    self.try_start(v, r);
                }
            }
        }
        self.window.fill(0);
    }

    /// Re-solve the max-min allocation over the active flows and reschedule
    /// the completion events of flows whose rate actually changed. A flow
    /// keeping its exact rate also keeps its progress bookkeeping and its
    /// scheduled event: advancing it would only re-derive the same
    /// completion time with extra rounding.
    fn recompute_rates(&mut self) {
        let now = self.now;
        let specs: Vec<FlowSpec> = self
            .active
            .iter()
            .map(|&fi| {
                let f = &self.flows[fi as usize];
                let pair = f.sender as usize * self.n + f.receiver as usize;
                let cap = self.pair_cap[pair];
                FlowSpec {
                    buckets: &self.pair_buckets[pair],
                    rate_cap: cap.is_finite().then_some(cap),
                }
            })
            .collect();
        let rates = max_min_rates(&specs, &self.bucket_cap);
        drop(specs);
        let mut changed: Vec<u32> = Vec::with_capacity(self.active.len());
        for (i, &fi) in self.active.iter().enumerate() {
            let f = &mut self.flows[fi as usize];
            if rates[i] == f.rate {
                continue;
            }
            f.remaining -= f.rate * (now - f.last_update);
            if f.remaining < 0.0 {
                f.remaining = 0.0;
            }
            f.last_update = now;
            f.rate = rates[i];
            f.epoch += 1;
            changed.push(fi);
        }
        for fi in changed {
            let f = &self.flows[fi as usize];
            let t = now + f.remaining / f.rate;
            let epoch = f.epoch;
            self.push_event(t, fi, epoch);
        }
    }
}

/// Flatten the topology's routes into bucket lists: one bucket per
/// directed use of a link (duplex links have independent directions,
/// half-duplex links share one). Returns per-bucket capacity in bytes/s,
/// per-pair bucket lists, and per-pair flow ceilings in bytes/s.
fn build_route_table(topo: &PhysicalTopology) -> (Vec<f64>, Vec<Vec<u32>>, Vec<f64>) {
    let n = topo.node_count();
    let links = topo.links();

    let mut bucket_cap = Vec::new();
    let mut link_bucket = Vec::with_capacity(links.len());
    for link in links {
        let cap = link.capacity_bps() / 8.0;
        let fwd = bucket_cap.len() as u32;
        bucket_cap.push(cap);
        let rev = if link.duplex {
            bucket_cap.push(cap);
            fwd + 1
        } else {
            fwd
        };
        link_bucket.push([fwd, rev]);
    }

    let mut pair_buckets = vec![Vec::new(); n * n];
    let mut pair_cap = vec![f64::INFINITY; n * n];
    for a in 0..n {
        for b in (a + 1)..n {
            let route = topo.route(a, b);
            let mut fwd = Vec::with_capacity(route.len());
            let mut rev = Vec::with_capacity(route.len());
            let mut cap = f64::INFINITY;
            let mut at = crate::topology::Vertex::Node(a as u32);
            for &lid in &route {
                let link = &links[lid];
                let forward = link.a == at;
                debug_assert!(forward || link.b == at);
                at = if forward { link.b } else { link.a };
                fwd.push(link_bucket[lid][if forward { 0 } else { 1 }]);
                rev.push(link_bucket[lid][if forward { 1 } else { 0 }]);
                if let Some(c) = link.flow_cap_bps() {
                    cap = cap.min(c / 8.0);
                }
            }
            debug_assert_eq!(at, crate::topology::Vertex::Node(b as u32));
            rev.reverse();
            pair_buckets[a * n + b] = fwd;
            pair_buckets[b * n + a] = rev;
            pair_cap[a * n + b] = cap;
            pair_cap[b * n + a] = cap;
        }
    }
    (bucket_cap, pair_buckets, pair_cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Link, Vertex};

    fn two_island_topo() -> PhysicalTopology {
        let mk = |a, b, cap| Link {
            a,
            b,
            capacity_mbps: cap,
            duplex: true,
            flow_cap_mbps: None,
        };
        PhysicalTopology::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec!["s0".into(), "s1".into()],
            vec![
                mk(Vertex::Node(0), Vertex::Switch(0), 890.0),
                mk(Vertex::Node(1), Vertex::Switch(0), 890.0),
                mk(Vertex::Node(2), Vertex::Switch(1), 890.0),
                mk(Vertex::Node(3), Vertex::Switch(1), 890.0),
                mk(Vertex::Switch(0), Vertex::Switch(1), 100.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn route_table_loads_both_directions_consistently() {
        let topo = two_island_topo();
        let (bucket_cap, pair_buckets, pair_cap) = build_route_table(&topo);
        // Five duplex links -> ten buckets.
        assert_eq!(bucket_cap.len(), 10);
        let n = 4;
        // a -> c crosses its access link, the trunk, and c's access link.
        let fwd = &pair_buckets[0 * n + 2];
        let rev = &pair_buckets[2 * n + 0];
        assert_eq!(fwd.len(), 3);
        assert_eq!(rev.len(), 3);
        // Opposite directions never share a bucket on duplex links.
        for b in fwd {
            assert!(!rev.contains(b));
        }
        // Same-direction flows through the trunk share its bucket.
        let ac: Vec<u32> = pair_buckets[0 * n + 2].clone();
        let bd: Vec<u32> = pair_buckets[1 * n + 3].clone();
        let shared: Vec<&u32> = ac.iter().filter(|x| bd.contains(x)).collect();
        assert_eq!(shared.len(), 1, "exactly the trunk bucket is shared");
        assert_eq!(bucket_cap[*shared[0] as usize], 100.0e6 / 8.0);
        assert!(pair_cap[0 * n + 2].is_infinite());
    }

    #[test]
    fn flow_caps_surface_in_the_pair_table() {
        let mk = |a, b, cap, fc| Link {
            a,
            b,
            capacity_mbps: cap,
            duplex: true,
            flow_cap_mbps: fc,
        };
        let topo = PhysicalTopology::new(
            vec!["a".into(), "b".into()],
            vec!["s0".into(), "s1".into()],
            vec![
                mk(Vertex::Node(0), Vertex::Switch(0), 890.0, None),
                mk(Vertex::Node(1), Vertex::Switch(1), 890.0, None),
                mk(Vertex::Switch(0), Vertex::Switch(1), 10_000.0, Some(787.0)),
            ],
        )
        .unwrap();
        let (_, _, pair_cap) = build_route_table(&topo);
        assert_eq!(pair_cap[0 * 2 + 1], 787.0e6 / 8.0);
        assert_eq!(pair_cap[1 * 2 + 0], 787.0e6 / 8.0);
    }

    #[test]
    fn half_duplex_direction_shares_one_bucket() {
        let topo = PhysicalTopology::new(
            vec!["a".into(), "b".into()],
            vec![],
            vec![Link {
                a: Vertex::Node(0),
                b: Vertex::Node(1),
                capacity_mbps: 100.0,
                duplex: false,
                flow_cap_mbps: None,
            }],
        )
        .unwrap();
        let (bucket_cap, pair_buckets, _) = build_route_table(&topo);
        assert_eq!(bucket_cap.len(), 1);
        assert_eq!(pair_buckets[1], vec![0]);
        assert_eq!(pair_buckets[2], vec![0]);
    }

    #[test]
    fn event_ordering_is_time_then_sequence() {
        let mut heap = BinaryHeap::new();
        heap.push(Entry { t: 2.0, seq: 0, flow: 0, epoch: 0 });
        heap.push(Entry { t: 1.0, seq: 2, flow: 1, epoch: 0 });
        heap.push(Entry { t: 1.0, seq: 1, flow: 2, epoch: 0 });
        let order: Vec<u32> = std::iter::from_fn(|| heap.pop().map(|e| e.flow)).collect();
        assert_eq!(order, vec![2, 1, 0]);
    }
}
