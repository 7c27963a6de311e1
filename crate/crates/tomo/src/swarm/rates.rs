//! Max-min fair rate allocation over capacity buckets.
//!
//! A bucket is one direction of a duplex link (or the shared pool of a
//! half-duplex link). Each flow crosses a set of buckets and may carry an
//! individual rate ceiling. The allocation is the unique max-min fair one:
//! conceptually all flows rise from zero together and freeze when a bucket
//! they cross saturates or their own ceiling is reached.

/// One flow's constraints. `buckets` lists bucket ids the flow crosses.
#[derive(Debug, Clone)]
pub(crate) struct FlowSpec<'a> {
    pub buckets: &'a [u32],
    pub rate_cap: Option<f64>,
}

/// Relative tolerance for grouping numerically tied saturation levels.
const TIE_EPS: f64 = 1e-12;

/// Compute max-min fair rates. Every flow must cross at least one bucket or
/// carry a cap, otherwise its rate would be unbounded.
pub(crate) fn max_min_rates(flows: &[FlowSpec], capacity: &[f64]) -> Vec<f64> {
    let mut rates = vec![0.0; flows.len()];
    let mut frozen = vec![false; flows.len()];
    let mut rem: Vec<f64> = capacity.to_vec();
    let mut crossing = vec![0u32; capacity.len()];
    for f in flows {
        debug_assert!(!f.buckets.is_empty() || f.rate_cap.is_some(), "unconstrained flow");
        for &b in f.buckets {
            crossing[b as usize] += 1;
        }
    }

    let mut left = flows.len();
    while left > 0 {
        // Next saturation level: the smallest per-bucket fair share or
        // unfrozen flow ceiling.
        let mut level = f64::INFINITY;
        for (b, &n) in crossing.iter().enumerate() {
            if n > 0 {
                level = level.min(rem[b] / n as f64);
            }
        }
        for (i, f) in flows.iter().enumerate() {
            if !frozen[i] {
                if let Some(cap) = f.rate_cap {
                    level = level.min(cap);
                }
            }
        }
        debug_assert!(level.is_finite() && level >= 0.0);
        let tie = level * (1.0 + TIE_EPS);

        // Freeze every unfrozen flow that is pinned at this level, either by
        // its ceiling or by a saturated bucket on its path.
        let mut froze_any = false;
        for (i, f) in flows.iter().enumerate() {
            if frozen[i] {
                continue;
            }
            let capped = f.rate_cap.is_some_and(|cap| cap <= tie);
            let saturated = f
                .buckets
                .iter()
                .any(|&b| rem[b as usize] / crossing[b as usize] as f64 <= tie);
            if capped || saturated {
                // A flow hitting its own ceiling stops exactly there; ties
                // within TIE_EPS make the distinction irrelevant.
                let rate = if capped { f.rate_cap.unwrap().min(level) } else { level };
                rates[i] = rate;
                frozen[i] = true;
                froze_any = true;
                left -= 1;
                for &b in f.buckets {
                    rem[b as usize] = (rem[b as usize] - rate).max(0.0);
                    crossing[b as usize] -= 1;
                }
            }
        }
        debug_assert!(froze_any, "progressive filling must freeze at least one flow per stage");
    }

    #[cfg(debug_assertions)]
    check_feasible(flows, capacity, &rates);
    rates
}

#[cfg(debug_assertions)]
fn check_feasible(flows: &[FlowSpec], capacity: &[f64], rates: &[f64]) {
    let mut load = vec![0.0; capacity.len()];
    for (f, &r) in flows.iter().zip(rates) {
        assert!(r > 0.0, "max-min rates are strictly positive");
        if let Some(cap) = f.rate_cap {
            assert!(r <= cap * (1.0 + 1e-9));
        }
        for &b in f.buckets {
            load[b as usize] += r;
        }
    }
    for (b, &l) in load.iter().enumerate() {
        assert!(
            l <= capacity[b] * (1.0 + 1e-9),
            "bucket {} over capacity: {} > {}",
            b,
            l,
            capacity[b]
        );
    }
}
