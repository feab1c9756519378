//! Seeded generator streams. Every stochastic routine derives its generator
//! from a `(seed, stream)` pair so parallel workers never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Stream = ChaCha20Rng;

pub fn stream(seed: u64, id: u64) -> Stream {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
