//! Counter-based random streams.
//!
//! Every replicate owns a ChaCha8 stream addressed by
//! `(master_seed, tag, replicate)`. The tag separates independent sides of an
//! experiment (e.g. the particle side and the diffusion side of a duality
//! check) so that they never share randomness. Because a stream is a pure
//! function of its address, ensembles are reproducible regardless of how
//! replicates are scheduled across threads.

use rand::{Rng, SeedableRng};
pub use rand_chacha::ChaCha8Rng;

/// Golden-ratio increment used by SplitMix64.
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The random stream for one replicate.
pub fn stream_rng(master_seed: u64, tag: u64, replicate: u64) -> ChaCha8Rng {
    let key = mix64(master_seed ^ mix64(tag.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(replicate);
    rng
}

/// Exponential waiting time with the given total rate, by inversion.
///
/// Returns `f64::INFINITY` for a zero rate.
#[inline]
pub fn exp_waiting<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    // 1 - U lies in (0, 1], so the logarithm is finite.
    let u: f64 = rng.random();
    -libm::log(1.0 - u) / rate
}

/// Uniform draw in `[0, bound)`.
#[inline]
pub fn uniform_below<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> f64 {
    rng.random::<f64>() * bound
}
