//! Seeded, splittable randomness.
//!
//! Every random stream is a `ChaCha8Rng` seeded from a 64-bit sub-seed. The
//! sub-seed for stream `label` and index `i` under a master seed `s` is
//!
//! ```text
//! sub_seed(s, label, i) = mix(mix(s ^ mix(label)) ^ mix(i + 1))
//! ```
//!
//! where `mix` is the SplitMix64 finalizer. Standard normals are drawn with
//! `rand_distr::StandardNormal` (ziggurat). Because each ensemble member owns
//! its own stream, results do not depend on how members are scheduled.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Truth,
    Forward,
    Backward,
    Init,
}

impl Stream {
    fn label(self) -> u64 {
        match self {
            Stream::Truth => 0x7472_7574_6800_0001,
            Stream::Forward => 0x666f_7277_6172_6402,
            Stream::Backward => 0x6261_636b_7761_7203,
            Stream::Init => 0x696e_6974_0000_0004,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn sub_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    mix(mix(seed ^ mix(stream.label())) ^ mix(index.wrapping_add(1)))
}

/// Seed used for truth-ensemble member `i`.
pub fn member_seed(seed: u64, i: usize) -> u64 {
    sub_seed(seed, Stream::Truth, i as u64)
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, stream, index))
}

pub fn fill_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

pub fn normal_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    fill_normal(rng, v.as_mut_slice());
    v
}
