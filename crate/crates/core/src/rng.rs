//! Keyed, counter-based random substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by
//! `(seed, purpose, stream, block)`. The stream id is usually a developer or
//! bootstrap draw index and the block a calendar month, so a developer's month-`m`
//! draws do not depend on how many draws any other developer or month consumed.
//! That keeps output identical under parallel execution and lets the AI-on and
//! AI-off arms of a paired experiment share their random numbers exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Initial beliefs, latent truths, known-language sets.
    Init,
    /// Per-month usage and AI signals.
    Signals,
    /// Per-month commit counts.
    Commits,
    /// Multiplier bootstrap weights.
    Bootstrap,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Init => 0x1a2b_3c4d_0000_0001,
            Purpose::Signals => 0x1a2b_3c4d_0000_0002,
            Purpose::Commits => 0x1a2b_3c4d_0000_0003,
            Purpose::Bootstrap => 0x1a2b_3c4d_0000_0004,
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent child seed, e.g. one per Monte Carlo replication.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Each block owns 2^36 32-bit words of keystream.
const BLOCK_SHIFT: u32 = 36;

/// Open the substream for `(seed, purpose, stream, block)`.
pub fn substream(seed: u64, purpose: Purpose, stream: u64, block: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ purpose.tag()));
    rng.set_stream(stream);
    rng.set_word_pos((block as u128) << BLOCK_SHIFT);
    rng
}
