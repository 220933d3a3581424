// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// https://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or https://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.

//! Deterministic data-parallel helpers.
//!
//! Rayon's work splitting is not stable between runs, so RNG state is never
//! tied to a rayon batch. Instead every work item (an emitter, a trajectory
//! chunk, a pulse block) owns a ChaCha stream selected by `set_stream` on a
//! generator keyed from `(seed, domain)`. Results are collected in index
//! order, so the output is bitwise identical for any number of workers and
//! for the sequential build.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream domains. Distinct domains keep substreams of different kernels
/// from overlapping when they share a user seed.
pub mod domain {
    pub const ENSEMBLE: u64 = 0x01;
    pub const CENSUS: u64 = 0x02;
    pub const SCAN: u64 = 0x03;
    pub const EMITTER_DYNAMICS: u64 = 0x04;
    pub const DETECTION: u64 = 0x05;
    pub const DARK_CALIBRATION: u64 = 0x06;
    pub const TRAJECTORIES: u64 = 0x07;
    pub const SPECTRAL_DIFFUSION: u64 = 0x08;
    pub const SPIN_SCAN: u64 = 0x09;
    pub const SPLITTING: u64 = 0x0a;
    pub const COHERENCE: u64 = 0x0b;
    pub const SELECTION: u64 = 0x0c;
    pub const LIFETIME: u64 = 0x0d;
    pub const SATELLITE_SCAN: u64 = 0x0e;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives a child seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    splitmix64(seed ^ splitmix64(label))
}

/// RNG for work item `index` of kernel `domain`.
pub fn substream(seed: u64, domain: u64, index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(derive_seed(seed, domain));
    rng.set_stream(index);
    rng
}

/// Evaluates `f(0..n)` and returns the results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Splits `0..len` into fixed-size chunks. The chunk size is part of the
/// determinism contract only where a chunk shares one RNG stream.
pub fn chunk_ranges(len: usize, chunk: usize) -> Vec<std::ops::Range<usize>> {
    let chunk = chunk.max(1);
    (0..len.div_ceil(chunk))
        .map(|i| i * chunk..((i + 1) * chunk).min(len))
        .collect()
}

/// Runs `f` on a dedicated pool of `threads` workers (or inline for the
/// sequential build).
#[cfg(feature = "parallel")]
pub fn with_workers<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<T: Send>(_threads: usize, f: impl FnOnce() -> T + Send) -> T {
    f()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: u64 = substream(7, domain::ENSEMBLE, 3).random();
        let b: u64 = substream(7, domain::ENSEMBLE, 3).random();
        let c: u64 = substream(7, domain::ENSEMBLE, 4).random();
        let d: u64 = substream(7, domain::CENSUS, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let run = || {
            map_indexed(257, |i| {
                let mut rng = substream(11, domain::TRAJECTORIES, i as u64);
                (0..10).map(|_| rng.random::<f64>()).sum::<f64>()
            })
        };
        let one = with_workers(1, run);
        let many = with_workers(8, run);
        assert_eq!(one, many);
    }

    #[test]
    fn chunks_cover_range() {
        let chunks = chunk_ranges(10, 4);
        assert_eq!(chunks, vec![0..4, 4..8, 8..10]);
        assert!(chunk_ranges(0, 4).is_empty());
    }
}
