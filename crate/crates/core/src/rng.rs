//! Seeded, counter-based random streams.
//!
//! Every parallel task draws from its own ChaCha stream derived from the run
//! seed, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream `stream` of the generator keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream for item `index` of a task family `tag`.
pub fn task_stream(seed: u64, tag: u32, index: u64) -> StreamRng {
    substream(seed, ((tag as u64) << 40) | (index & ((1 << 40) - 1)))
}
