//! Counter-based random numbers for dropout masks.
//!
//! Dropout needs a mask that is a pure function of `(seed, stream, element
//! index)` so that the same context reproduces the same mask bit-for-bit no
//! matter how the elements are visited. A stream RNG cannot give that, so we
//! hash the counter triple through two SplitMix64 finalizers.

/// SplitMix64 finalizer (Steele et al., the `splitmix64` output mix).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of a `(seed, stream, index)` counter triple.
#[inline]
pub fn counter_hash(seed: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(stream)).wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Maps a hash to a uniform f64 in [0, 1) using the top 53 bits.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in [0, 1) for one element of a counter stream.
#[inline]
pub fn uniform(seed: u64, stream: u64, index: u64) -> f64 {
    unit_f64(counter_hash(seed, stream, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_stream_separated() {
        assert_eq!(uniform(1, 2, 3), uniform(1, 2, 3));
        assert_ne!(uniform(1, 2, 3), uniform(1, 2, 4));
        assert_ne!(uniform(1, 2, 3), uniform(1, 3, 3));
        assert_ne!(uniform(1, 2, 3), uniform(2, 2, 3));
    }

    #[test]
    fn roughly_uniform() {
        let n = 100_000u64;
        let mean: f64 = (0..n).map(|i| uniform(42, 7, i)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
        let below: usize = (0..n).filter(|&i| uniform(42, 7, i) < 0.2).count();
        let frac = below as f64 / n as f64;
        assert!((frac - 0.2).abs() < 0.005, "frac {frac}");
    }
}
