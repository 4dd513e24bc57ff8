use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The one RNG algorithm used across the crate. ChaCha8 has a documented,
/// platform-independent output stream for a given seed.
pub type RunRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent substream of `seed`, selected by `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
