//! Named random streams fanned out from one experiment seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn stream_id(name: &str) -> u64 {
    // FNV-1a
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Independent generator for the stream `name` (e.g. "data", "init", "shuffle").
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name));
    rng
}

/// A 64-bit seed drawn from the stream `name`.
pub fn derive(seed: u64, name: &str) -> u64 {
    use rand::Rng;
    stream(seed, name).random()
}
