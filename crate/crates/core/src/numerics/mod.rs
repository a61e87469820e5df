//! Dense tensors, the seeded generator, and reverse-mode gradients.

mod rng;
mod tape;
mod tensor;

pub use rng::{derive_seed, splitmix64, Rng};
pub use tape::{Gradients, OpRecord, Tape, Var};
pub use tensor::Tensor;

/// FNV-1a, 64-bit. Used for checkpoint checksums and dataset fingerprints.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
