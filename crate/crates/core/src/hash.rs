//! Deterministic keyed hashing.
//!
//! All randomness in the toolkit flows from a single seed through these
//! functions; there is no global RNG state. Selections are therefore
//! order-independent and reproducible under parallel population.

/// SplitMix64 finalizer. Bijective on u64 with strong avalanche behaviour.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// FNV-1a over a byte slice, folded through splitmix for avalanche.
pub fn hash_bytes(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ splitmix64(seed);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

/// Hash of several string parts under a seed. Parts are length-prefixed so
/// that ("ab", "c") and ("a", "bc") hash differently.
pub fn hash_parts(seed: u64, parts: &[&str]) -> u64 {
    let mut h = splitmix64(seed ^ 0x5851_f42d_4c95_7f2d);
    for part in parts {
        h = splitmix64(h ^ (part.len() as u64));
        h = hash_bytes(h, part.as_bytes());
    }
    h
}

/// Uniform index in `0..n` keyed by (seed, counter). `n` must be non-zero.
pub fn pick_index(seed: u64, counter: u64, n: usize) -> usize {
    debug_assert!(n > 0);
    let h = splitmix64(splitmix64(seed ^ 0x6a09_e667_f3bc_c908) ^ splitmix64(counter));
    (h % n as u64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn deterministic() {
        assert_eq!(hash_parts(7, &["a", "b"]), hash_parts(7, &["a", "b"]));
        assert_ne!(hash_parts(7, &["a", "b"]), hash_parts(8, &["a", "b"]));
        assert_ne!(hash_parts(7, &["ab", "c"]), hash_parts(7, &["a", "bc"]));
    }

    #[test]
    fn pick_index_in_range_and_roughly_uniform() {
        let n = 10usize;
        let mut counts = [0u32; 10];
        for i in 0..10_000u64 {
            counts[pick_index(42, i, n)] += 1;
        }
        // 3 sigma around 1000 for a binomial(10000, 1/10)
        let sigma = (10_000f64 * 0.1 * 0.9).sqrt();
        for &c in &counts {
            assert!((c as f64 - 1000.0).abs() < 3.0 * sigma, "count {c}");
        }
        let again: Vec<usize> = (0..100).map(|i| pick_index(42, i, n)).collect();
        let once: Vec<usize> = (0..100).map(|i| pick_index(42, i, n)).collect();
        assert_eq!(again, once);
    }
}
