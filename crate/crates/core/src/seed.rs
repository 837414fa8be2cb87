//! Deterministic seed derivation shared by every randomised step.

/// RNG stream tags mixed into [`derive_seed`].
pub mod stream {
    pub const PARTITION: u64 = 1;
    pub const INIT: u64 = 2;
    pub const CLIENT: u64 = 3;
    pub const SPLIT: u64 = 4;
}

/// Mixes a base seed with a stream tag and two coordinates (splitmix64
/// finalizer), so each (seed, round, client) gets an independent generator.
pub fn derive_seed(seed: u64, stream: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(mix(mix(seed) ^ stream) ^ a) ^ b)
}
