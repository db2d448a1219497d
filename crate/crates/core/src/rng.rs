//! Seeded random-stream policy.
//!
//! A master seed keys a ChaCha8 generator; each consumer reads its own 64-bit
//! stream id of that key ([`Stream`]), so changing how many numbers one
//! consumer draws never shifts another consumer's sequence. Per-episode and
//! per-evaluation seeds are derived with [`derive_seed`]. Fading gains are
//! not drawn sequentially at all: [`fading_gain`] hashes the
//! `(seed, rtt, ue, repetition)` counter directly, so every triple has a
//! fixed draw regardless of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named consumers of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Placement = 1,
    Activation = 2,
    CtuChoice = 3,
    Fading = 4,
    Exploration = 5,
    ReplaySampling = 6,
    NetInit = 7,
    /// The random action recorded at environment reset.
    InitAction = 8,
    /// Actions of the uniformly random baseline policy.
    RandomPolicy = 9,
}

/// Opens `stream` of the generator keyed by `seed`.
pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Like [`substream`] but with an extra index, e.g. one stream per agent.
pub fn indexed_substream(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    substream(derive_seed(seed, stream as u64, index), stream)
}

/// Mix a parent seed with a label and an index into an independent child seed.
pub fn derive_seed(seed: u64, label: u64, index: u64) -> u64 {
    let mut h = fmix64(seed ^ 0x6a09_e667_f3bc_c908);
    h = fmix64(h ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    fmix64(h ^ index.wrapping_mul(0xc2b2_ae3d_27d4_eb4f))
}

/// Labels for [`derive_seed`].
pub mod labels {
    pub const TRAIN_EPISODE: u64 = 0x0074_7261_696e;
    pub const EVAL_EPISODE: u64 = 0x6576_616c;
}

/// Counter-based uniform in the open interval (0, 1).
pub fn counter_uniform(seed: u64, a: u64, b: u64, c: u64) -> f64 {
    let mut h = fmix64(seed ^ (Stream::Fading as u64).wrapping_mul(0xff51_afd7_ed55_8ccd));
    h = fmix64(h ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    h = fmix64(h ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f));
    h = fmix64(h ^ c.wrapping_mul(0x1656_67b1_9e37_79f9));
    // 53 random mantissa bits, shifted off zero.
    ((h >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Unit-mean exponential power gain for one `(rtt, ue, repetition)` triple.
pub fn fading_gain(seed: u64, rtt: u64, ue: u64, repetition: u64) -> f64 {
    -counter_uniform(seed, rtt, ue, repetition).ln()
}

/// MurmurHash3 64-bit finalizer.
#[inline]
fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^= k >> 33;
    k
}
