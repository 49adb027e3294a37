//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose key is
//! derived from `(seed, replicate, role)`. Parallel Monte Carlo therefore
//! produces the same numbers no matter how replicates are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose of a random stream. Distinct roles never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamRole {
    Design = 1,
    Noise = 2,
    Signal = 3,
    Split = 4,
    Restart = 5,
}

pub type Rng = ChaCha8Rng;

/// Build the generator for one `(seed, replicate, role)` triple.
pub fn stream(seed: u64, replicate: u64, role: StreamRole) -> Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replicate.to_le_bytes());
    key[16..24].copy_from_slice(&(role as u64).to_le_bytes());
    key[24..32].copy_from_slice(b"sdebias1");
    ChaCha8Rng::from_seed(key)
}

/// Mix two integers into a derived seed, e.g. to give each grid point of a
/// sweep its own family of streams.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
