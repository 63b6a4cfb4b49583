//! Deterministic random-number streams.
//!
//! Every random quantity in a sweep (channel taps, payload bits, noise,
//! interleaver permutation, covariance training draws) is drawn from its own
//! ChaCha8 stream keyed by `(master seed, sweep point, frame, purpose)`.
//! Streams are derived with a splitmix64-style mixer, so results do not
//! depend on evaluation order — frames can be simulated in parallel and
//! still reproduce byte-identical output.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use num_complex::Complex64;

/// What a derived stream is used for. Keeping the discriminants explicit
/// pins the stream layout: reordering variants must not silently reshuffle
/// every random draw in the project.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Channel = 0,
    Payload = 1,
    Noise = 2,
    Interleaver = 3,
    Covariance = 4,
}

/// splitmix64 finalizer (Stafford's Mix13 constants). Bijective on u64, so
/// distinct inputs never collide after a single round.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the RNG stream for one `(point, frame, purpose)` cell of a sweep.
pub fn stream(master: u64, point: u32, frame: u32, purpose: Purpose) -> ChaCha8Rng {
    let key = ((point as u64) << 32) | frame as u64;
    let seed = mix(mix(mix(master) ^ key) ^ purpose as u64);
    ChaCha8Rng::seed_from_u64(seed)
}

/// One draw from a circularly-symmetric complex Gaussian with variance
/// `var` (i.e. E|z|² = var, split evenly between the parts).
pub fn complex_gaussian(rng: &mut impl Rng, var: f64) -> Complex64 {
    let s = (var * 0.5).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Fill a vector with i.i.d. CN(0, var) draws.
pub fn complex_gaussian_vec(rng: &mut impl Rng, n: usize, var: f64) -> Vec<Complex64> {
    (0..n).map(|_| complex_gaussian(rng, var)).collect()
}

/// Fisher–Yates shuffle driven by the given stream. Written out by hand so
/// the permutation sequence is pinned by this crate, not by whatever
/// `rand` happens to do in a given release.
pub fn shuffled_indexes(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// `k` distinct indexes out of `0..n`, in the order the shuffle produced
/// them.
pub fn sample_distinct(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "cannot sample {k} distinct values from 0..{n}");
    let mut perm = shuffled_indexes(rng, n);
    perm.truncate(k);
    perm
}
