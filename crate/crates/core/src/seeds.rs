//! Deterministic seed derivation. Every random decision in the pipeline
//! (fixture synthesis, split shuffles, augmentation, evaluation noise) draws
//! from an RNG keyed by a base seed plus a structured path, so runs are
//! reproducible and independent stages never share a stream by accident.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a base seed with a path of integers into a new seed. Uses the
/// splitmix64 finalizer per step; distinct paths land in distinct streams.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(base ^ 0x9e37_79b9_7f4a_7c15);
    for &p in path {
        state = splitmix64(state ^ splitmix64(p.wrapping_add(0x517c_c1b7_2722_0a95)));
    }
    state
}

/// RNG seeded from a derived seed.
pub fn rng_for(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

/// Stable 64-bit tag for a string, for mixing names into seed paths.
pub fn tag(name: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_paths_distinct_seeds() {
        let a = derive_seed(7, &[1, 2]);
        let b = derive_seed(7, &[2, 1]);
        let c = derive_seed(7, &[1, 2, 0]);
        let d = derive_seed(8, &[1, 2]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn derivation_is_stable() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_eq!(tag("eval-noise"), tag("eval-noise"));
        assert_ne!(tag("eval-noise"), tag("train-noise"));
    }

    #[test]
    fn rng_streams_reproduce() {
        use rand::Rng;
        let mut r1 = rng_for(3, &[tag("x"), 5]);
        let mut r2 = rng_for(3, &[tag("x"), 5]);
        let a: Vec<u32> = (0..8).map(|_| r1.gen()).collect();
        let b: Vec<u32> = (0..8).map(|_| r2.gen()).collect();
        assert_eq!(a, b);
    }
}
