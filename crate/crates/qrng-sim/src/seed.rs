//! Deterministic seeding.
//!
//! One logical bit stream is one sequential generator; replaying a
//! `(config, seed)` pair reproduces the stream bit for bit. Parallel
//! throughput never splits a stream: it comes from independent streams
//! (replicas, scan points, calibration windows) whose seeds are derived
//! from a master seed and a stream index through a fixed mixing function,
//! so results cannot depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator behind every simulated stream. Counter-based and
/// platform-independent, so seeded runs replay exactly.
pub type SimRng = ChaCha8Rng;

/// splitmix64 finalizer, the fixed mixing function for seed derivation.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stream at `index` (replica, scan point, or window) under
/// a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ index)
}

/// Generator for the stream at `index` under a master seed.
pub fn stream_rng(master: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, index))
}
