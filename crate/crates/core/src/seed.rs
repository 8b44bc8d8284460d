//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a [`Stream`] whose seed is
//! derived from a master seed and a tuple of integer keys (replication index,
//! grid cell, bootstrap replicate, ...). Results therefore never depend on
//! the order in which work items are scheduled.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

/// The generator used for all simulation work.
pub type Stream = Xoshiro256PlusPlus;

/// Key namespaces, so that e.g. series seeds and bootstrap seeds derived from
/// the same master seed never coincide.
pub(crate) mod domain {
    pub const SERIES: u64 = 0x5345_5249_4553;
    pub const BOOTSTRAP: u64 = 0x424f_4f54;
    pub const REFERENCE: u64 = 0x5245_4646;
    pub const SUBSAMPLE: u64 = 0x5355_4253;
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold `keys` into `seed` with the SplitMix64 finalizer.
pub fn derive(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Sub-seed for replication `r` of an experiment seeded with `master`.
pub fn mix(master: u64, r: u64) -> u64 {
    derive(master, &[r])
}

pub fn stream(seed: u64) -> Stream {
    Stream::seed_from_u64(seed)
}

/// Reproducible i.i.d. N(0,1) draws (ziggurat over Xoshiro256++).
pub fn standard_normal_stream(seed: u64) -> impl Iterator<Item = f64> {
    StandardNormal.sample_iter(stream(seed))
}
