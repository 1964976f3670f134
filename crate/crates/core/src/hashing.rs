//! Small deterministic hashing helpers. Output must not depend on platform
//! or process, so std's randomized hashers are not used here.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the sub-stream owned by `(key, index)` under a master seed.
pub fn substream_seed(master: u64, key: &str, index: u64) -> u64 {
    mix64(mix64(master ^ fnv1a64(key.as_bytes())) ^ index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn substreams_differ() {
        let a = substream_seed(7, "q1", 1);
        assert_ne!(a, substream_seed(7, "q1", 2));
        assert_ne!(a, substream_seed(7, "q2", 1));
        assert_ne!(a, substream_seed(8, "q1", 1));
        assert_eq!(a, substream_seed(7, "q1", 1));
    }
}
