//! Named, independent random substreams derived from one seed.
//!
//! Every random object (membership, Ω, each view's H, Θ and noise, each
//! k-means restart, ...) draws from its own ChaCha stream selected by a label
//! and an index, so adding or removing one consumer never perturbs the draws
//! of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn fnv1a(label: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in label.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Stream `(label, index)` of the generator seeded with `seed`.
pub fn substream(seed: u64, label: &str, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(label) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng
}

/// A fresh 64-bit seed for a derived task, e.g. one benchmark cell.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    use rand::RngCore;
    substream(seed, label, index).next_u64()
}
