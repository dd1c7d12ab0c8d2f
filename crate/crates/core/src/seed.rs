//! Seed derivation. Every random stream in the pipeline comes from an
//! explicit seed mixed with a stage name, so stages never share a stream.

use crate::model::features::fnv1a64;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the stream named `stage` under `base`.
pub fn derive_seed(base: u64, stage: &str) -> u64 {
    mix(base ^ fnv1a64(stage.as_bytes()))
}
