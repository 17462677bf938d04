//! Seeded, portable randomness.
//!
//! One master seed drives the whole simulation. Every stochastic subsystem
//! (placement, cell motion, policy draws) gets its own ChaCha8 stream derived
//! from the master seed and a stream tag, so reordering one subsystem's draws
//! never perturbs another's. Same seed, same platform-independent sequence.

use crate::vec3::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Placement of cells, obstacles, and robot spawns.
pub const STREAM_PLACEMENT: u64 = 1;
/// Confined random motion of cancer cells.
pub const STREAM_CELL_MOTION: u64 = 2;
/// Epsilon draws and fallback direction draws in the policy.
pub const STREAM_POLICY: u64 = 3;

/// SplitMix64-style finalizer combining a seed with a stream tag.
fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic RNG for one subsystem stream of one seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream))
}

/// Sub-seed for episode `index` of a run with master seed `master`.
pub fn episode_seed(master: u64, index: u64) -> u64 {
    mix(master, 0x4550_0000_0000_0000 ^ index)
}

/// Uniform random unit vector via rejection sampling from the unit cube.
pub fn unit_vector<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n2 = v.norm_squared();
        if n2 > 1e-12 && n2 <= 1.0 {
            return v * (1.0 / n2.sqrt());
        }
    }
}

/// Uniform random point in the closed ball of the given radius.
pub fn in_ball<R: Rng>(rng: &mut R, radius: f64) -> Vec3 {
    if radius <= 0.0 {
        return Vec3::ZERO;
    }
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}
