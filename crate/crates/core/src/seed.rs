//! Named seed derivation.
//!
//! Every random draw in a run flows from one global seed through
//! `derive(base, purpose, indices)`, so a single client, round or batch can
//! be replayed in isolation and results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Derives a child seed from `base`, a purpose label and a path of indices.
pub fn derive(base: u64, purpose: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix(base ^ fnv1a(purpose));
    for &i in indices {
        h = splitmix(h ^ splitmix(i.wrapping_add(GOLDEN)));
    }
    h
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
