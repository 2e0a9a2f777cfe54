//! Discrete-time simulation and analysis of self-regulating random walks on
//! graphs.
//!
//! A set of random-walk tokens moves over an undirected connected graph. Walks
//! can fail arbitrarily (bursts, per-visit loss, a Byzantine absorbing node);
//! the visited nodes run decentralized control policies (`MissingPerson`,
//! `DecAFork`, `DecAFork+`) that fork or terminate walks to keep the number of
//! active walks near a target. The [`theory`] module evaluates the closed-form
//! distributions and bounds that govern the estimator the policies share.

pub mod engine;
pub mod failures;
pub mod graph;
pub mod harness;
pub mod policies;
pub mod samples;
pub mod theory;

/// Derives an independent 64-bit seed from a master seed and a stream index.
///
/// SplitMix64 finalizer applied to `master ^ (index + phi)`; consecutive
/// indices yield statistically independent streams, so per-run seeds do not
/// depend on execution order or thread count.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
