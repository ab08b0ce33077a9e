//! Counter-based seeding: every random stream is addressed by a tuple of tags, so the
//! values drawn never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix(base), |acc, &t| splitmix(acc ^ splitmix(t.wrapping_add(0x632B_E59B_D9B4_E019))))
}

/// Generator for one addressed stream.
pub fn stream(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// Generator keyed by `key` whose ChaCha stream id is `id`; cheap to re-create per path.
pub fn keyed_stream(key: &ChaCha8Rng, id: u64) -> ChaCha8Rng {
    let mut r = key.clone();
    r.set_stream(id);
    r.set_word_pos(0);
    r
}
