//! Seed fan-out.
//!
//! Every random stream in the crate is derived from one master seed and a
//! component name: `derive_seed(master, "echo/noise")`. The name is hashed
//! with 64-bit FNV-1a, xor-ed with the master seed and passed through the
//! SplitMix64 finaliser. Per-item substreams (frames, trials) mix an index in
//! the same way with [`substream`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the named component.
pub fn derive_seed(master: u64, component: &str) -> u64 {
    splitmix64(master ^ fnv1a(component.as_bytes()))
}

/// Seed for item `index` of a stream that was itself seeded with `seed`.
pub fn substream(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
