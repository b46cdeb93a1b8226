//! Counter-based random streams.
//!
//! Every path owns a ChaCha8 stream whose key is derived from
//! `(seed, domain)` and whose 64-bit stream id is the path id, so the
//! variates of a path are a pure function of `(seed, domain, path_id)` and
//! the position in the stream. Worker count and scheduling never enter.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Key domain of ordinary per-path streams.
pub const PATH_DOMAIN: u64 = 0;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(seed: u64, domain: u64) -> [u8; 32] {
    let mut state = seed ^ domain.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    domain: u64,
    path_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, path_id: u64) -> Self {
        RngStream::in_domain(seed, PATH_DOMAIN, path_id)
    }

    /// Stream in a separate key domain (e.g. one per splitting level).
    pub fn in_domain(seed: u64, domain: u64, path_id: u64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(derive_key(seed, domain));
        rng.set_stream(path_id);
        RngStream { seed, domain, path_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn domain(&self) -> u64 {
        self.domain
    }

    pub fn path_id(&self) -> u64 {
        self.path_id
    }

    /// Position in the underlying 32-bit word stream.
    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    #[inline]
    pub fn fill_normals(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = StandardNormal.sample(&mut self.rng);
        }
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Lemire's multiply-shift; bias is < n / 2⁶⁴.
        ((self.rng.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Next `k` standard normal variates of the stream.
pub fn draw_increments(stream: &mut RngStream, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    stream.fill_normals(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_sequence() {
        let a = draw_increments(&mut RngStream::new(7, 3), 1000);
        let b = draw_increments(&mut RngStream::new(7, 3), 1000);
        assert_eq!(a, b);
        let c = draw_increments(&mut RngStream::new(7, 4), 1000);
        assert_ne!(a, c);
        let d = draw_increments(&mut RngStream::in_domain(7, 1, 3), 1000);
        assert_ne!(a, d);
    }

    #[test]
    fn moments_within_clt_bounds() {
        let n = 1_000_000;
        let v = draw_increments(&mut RngStream::new(2024, 0), n);
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((0.99..=1.01).contains(&var), "var {var}");
    }

    #[test]
    fn distinct_paths_uncorrelated() {
        let n = 1_000_000;
        let a = draw_increments(&mut RngStream::new(99, 10), n);
        let b = draw_increments(&mut RngStream::new(99, 11), n);
        let (ma, mb) = (a.iter().sum::<f64>() / n as f64, b.iter().sum::<f64>() / n as f64);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n as f64;
        let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n as f64).sqrt();
        let sb = (b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n as f64).sqrt();
        let rho = cov / (sa * sb);
        assert!(rho.abs() <= 4.0 / (n as f64).sqrt(), "rho {rho}");
    }

    #[test]
    fn index_in_range() {
        let mut s = RngStream::new(1, 1);
        let mut counts = [0usize; 5];
        for _ in 0..50_000 {
            counts[s.index(5)] += 1;
        }
        assert!(counts.iter().all(|&c| (9_000..11_000).contains(&c)));
        assert!((0..1000).map(|_| s.uniform()).all(|u| (0.0..1.0).contains(&u)));
    }
}
