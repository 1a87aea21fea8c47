//! Seed derivation for independent random streams.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a path of stream indices, so that
/// e.g. (run, fold, restart) cells get fixed, distinct seeds regardless of
/// the order in which they are evaluated.
pub(crate) fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix(base), |acc, &p| mix(acc ^ mix(p.wrapping_add(1))))
}
