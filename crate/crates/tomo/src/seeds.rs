//! Seed derivation for reproducible simulations.
//!
//! Every random decision in the toolkit flows from a single master seed
//! through `derive`, so one u64 pins peer sets, choke lotteries, fragment
//! tie-breaks, and per-iteration run seeds, independent of thread count.

/// SplitMix64 output function (Steele, Lea, Flood 2014). Bijective, so
/// distinct inputs always produce distinct stream seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from a master seed and a stream index.
/// For a fixed master this is a bijection of the stream index, so streams
/// never collide; folding the stream in after mixing keeps the roles of
/// master and stream asymmetric.
pub(crate) fn derive(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ stream)
}

/// A ChaCha8 generator on the derived stream.
pub(crate) fn rng(master: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(derive(master, stream))
}

/// Stream index namespaces so different uses of the same master seed
/// cannot collide (node streams vs per-run seeds vs clustering seed).
pub(crate) const STREAM_RUN: u64 = 1 << 32;
pub(crate) const STREAM_CLUSTER: u64 = 2 << 32;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_deterministic_and_spreads() {
        assert_eq!(derive(7, 0), derive(7, 0));
        assert_ne!(derive(7, 0), derive(7, 1));
        assert_ne!(derive(7, 0), derive(8, 0));
        // Low-entropy masters must still produce distinct node streams.
        let mut seen = std::collections::HashSet::new();
        for master in 0..4u64 {
            for stream in 0..256u64 {
                assert!(seen.insert(derive(master, stream)));
            }
        }
    }
}
