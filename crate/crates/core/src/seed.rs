use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// splitmix64 finalizer
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream from a user seed and a path of indices
/// (stage tag, iteration, node, ...), so parallel work stays reproducible.
pub(crate) fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(seed), |acc, &p| {
        mix64(acc ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15))
    })
}

pub(crate) fn rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}

// Stage tags keep the streams of different consumers apart.
pub(crate) const KNNG_INIT: u64 = 1;
pub(crate) const KNNG_SAMPLE: u64 = 2;
pub(crate) const ENTRY: u64 = 3;
pub(crate) const QUALITY: u64 = 4;
pub(crate) const LAYERS: u64 = 5;
pub(crate) const HNSW_ENTRY: u64 = 6;
pub(crate) const LAYER_BUILD: u64 = 7;
pub(crate) const SYNTH: u64 = 8;
