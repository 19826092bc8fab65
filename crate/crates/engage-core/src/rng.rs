//! Seeded random streams.
//!
//! All randomness in a run funnels through one root seed plus named
//! substreams, so that runs are bit-reproducible regardless of how work is
//! scheduled. A substream is identified by a name and up to two integer
//! coordinates (e.g. graph id and epoch).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates nearby seeds.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn hash_name(name: &str) -> u64 {
    // FNV-1a, stable across platforms.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Mix a run seed with a substream name and coordinates into a stream seed.
pub fn mix(run_seed: u64, name: &str, a: u64, b: u64) -> u64 {
    let mut s = splitmix64(run_seed ^ hash_name(name));
    s = splitmix64(s ^ a.wrapping_mul(0x9e3779b97f4a7c15));
    splitmix64(s ^ b.wrapping_mul(0xc2b2ae3d27d4eb4f))
}

/// Deterministic generator for a named substream of a run.
pub fn substream(run_seed: u64, name: &str, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(run_seed, name, a, b))
}
