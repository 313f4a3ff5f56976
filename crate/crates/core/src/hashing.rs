//! Stable 64-bit hashing (FNV-1a) used wherever hashes feed seeds or
//! embedding buckets. `std`'s default hasher is not stable across releases,
//! so reproducible runs need a fixed function.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Fold an additional value into an existing hash.
pub(crate) fn fnv1a_extend(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = seed ^ FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}
