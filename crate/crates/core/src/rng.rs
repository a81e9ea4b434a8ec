//! Counter-derived random streams.
//!
//! Every stochastic routine in the crate derives its generator from a master
//! seed plus a tuple of counters (size, replicate, stratum, permutation index).
//! Streams therefore never depend on scheduling order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every derived stream.
pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with an ordered list of counters into a new seed.
///
/// Order matters: `derive_seed(s, &[1, 2]) != derive_seed(s, &[2, 1])` in general.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(GOLDEN)));
    }
    h
}

/// Stable 64-bit hash of a sequence of small integers (FNV-1a over LE bytes).
pub fn hash_codes(codes: &[u32]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for c in codes {
        for b in c.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Stable hash of a string, used to fold variable names into seeds.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn stream(seed: u64, parts: &[u64]) -> Stream {
    Stream::seed_from_u64(derive_seed(seed, parts))
}
