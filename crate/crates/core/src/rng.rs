//! Seed derivation. Every stochastic step draws from its own ChaCha stream
//! keyed by a derived seed, so results never depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `base` one word at a time: `s = mix64(s ^ part)`.
///
/// `derive_seed(seed, &[class, index])` is the per-item seed used by the
/// synthetic generator; adding items to one class leaves every other
/// class's seeds untouched.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(base), |s, &p| mix64(s ^ p))
}

pub fn rng_for(base: u64, parts: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}

// Stream tags keep derived seeds of unrelated stages apart.
pub(crate) const TAG_SPLIT: u64 = 0x5350_4c49;
pub(crate) const TAG_SYNTH: u64 = 0x5359_4e54;
pub(crate) const TAG_INIT: u64 = 0x494e_4954;
pub(crate) const TAG_SHUFFLE: u64 = 0x5348_5546;
pub(crate) const TAG_NOISE: u64 = 0x4e4f_4953;
pub(crate) const TAG_FOREST: u64 = 0x4652_5354;
pub(crate) const TAG_SVM: u64 = 0x5356_4d00;
