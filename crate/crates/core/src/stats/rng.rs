use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counter-based generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Deterministic generator for `(seed, stream)`.
///
/// ChaCha keeps a 64-bit stream id next to its block counter, so different
/// streams under one seed are independent and the output is identical on
/// every platform.
pub fn make_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes labels into a seed (splitmix64 finaliser per label) so that nested
/// experiment stages get unrelated seeds.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(seed, |acc, &label| {
        splitmix64(acc ^ splitmix64(label.wrapping_add(0x5851_f42d_4c95_7f2d)))
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
