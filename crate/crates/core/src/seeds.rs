//! Seed derivation so that independent components draw from independent
//! deterministic streams.

/// splitmix64 finalizer; good avalanche, stable across platforms.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a component salt.
pub fn derive(base: u64, salt: u64) -> u64 {
    splitmix64(base ^ salt.wrapping_mul(0xa076_1d64_78bd_642f))
}
