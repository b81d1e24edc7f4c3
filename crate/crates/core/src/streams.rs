//! Counter-based derivation of per-device random streams.
//!
//! The stream used by device `i` at inner iteration `k` of epoch `s` is a
//! ChaCha8 generator seeded with
//!
//! ```text
//! h0 = splitmix64(master_seed)
//! h1 = splitmix64(h0 ^ i)
//! h2 = splitmix64(h1 ^ s)
//! seed = splitmix64(h2 ^ k)
//! ```
//!
//! so a draw depends only on its coordinates, never on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(master_seed: u64, device: usize, epoch: usize, inner_iter: usize) -> u64 {
    [device as u64, epoch as u64, inner_iter as u64]
        .into_iter()
        .fold(splitmix64(master_seed), |h, w| splitmix64(h ^ w))
}

pub fn device_rng(master_seed: u64, device: usize, epoch: usize, inner_iter: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master_seed, device, epoch, inner_iter))
}
