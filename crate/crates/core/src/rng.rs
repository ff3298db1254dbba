//! Counter-based random streams.
//!
//! Every Gaussian draw is addressed by `(seed, row, column)`: row `r` reads
//! ChaCha8 stream `r` under a key expanded from the seed, and columns `2k`
//! and `2k + 1` share one Box–Muller pair built from 64-bit words `2k` and
//! `2k + 1` of that stream. Nothing depends on the order in which rows or trials are
//! generated.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` under `master`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    mix64(master ^ mix64(trial.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Independent sub-seed for a named purpose (e.g. drawing a random
/// population spectrum) so it never collides with the data stream.
pub fn domain_seed(seed: u64, domain: u64) -> u64 {
    mix64(seed.wrapping_add(GOLDEN.wrapping_mul(domain.wrapping_add(0x5eed))))
}

fn key(seed: u64) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut s = seed;
    for chunk in out.chunks_exact_mut(8) {
        s = s.wrapping_add(GOLDEN);
        chunk.copy_from_slice(&mix64(s).to_le_bytes());
    }
    out
}

/// Uniform on the open interval (0, 1) from the top 53 bits.
fn open_unit(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Fills `out` with standard normals for row `row` of stream `seed`.
pub fn row_normals(seed: u64, row: u64, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::from_seed(key(seed));
    rng.set_stream(row);
    for pair in out.chunks_mut(2) {
        let u1 = open_unit(rng.next_u64());
        let u2 = open_unit(rng.next_u64());
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        pair[0] = r * c;
        if pair.len() > 1 {
            pair[1] = r * s;
        }
    }
}

/// A plain sequential uniform stream, used for random population draws.
pub struct UniformStream(ChaCha8Rng);

impl UniformStream {
    pub fn new(seed: u64) -> Self {
        UniformStream(ChaCha8Rng::from_seed(key(seed)))
    }

    pub fn next_f64(&mut self) -> f64 {
        open_unit(self.0.next_u64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_do_not_depend_on_row_length() {
        let mut a = vec![0.0; 7];
        let mut b = vec![0.0; 12];
        row_normals(42, 3, &mut a);
        row_normals(42, 3, &mut b);
        assert_eq!(a[..], b[..7]);
    }

    #[test]
    fn streams_differ() {
        let mut a = vec![0.0; 4];
        let mut b = vec![0.0; 4];
        row_normals(1, 0, &mut a);
        row_normals(1, 1, &mut b);
        assert_ne!(a, b);
        assert_ne!(trial_seed(0, 0), trial_seed(0, 1));
    }

    #[test]
    fn normal_moments() {
        let mut v = vec![0.0; 200_000];
        for (r, chunk) in v.chunks_mut(1000).enumerate() {
            row_normals(9, r as u64, chunk);
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let kurt = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n / var.powi(2);
        // 5 sigma bands
        assert!(mean.abs() < 5.0 / n.sqrt());
        assert!((var - 1.0).abs() < 5.0 * (2.0 / n).sqrt());
        assert!((kurt - 3.0).abs() < 5.0 * (24.0 / n).sqrt());
    }
}
