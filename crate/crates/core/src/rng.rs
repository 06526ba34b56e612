//! Reproducible random streams.
//!
//! Every stochastic routine draws from a [`StreamRng`] identified by a
//! `(seed, stream_id)` pair. The pair is folded into one 64-bit key with
//! [`mix`], the key is expanded with SplitMix64 into a 256-bit ChaCha key, and
//! the stream is a ChaCha8 generator (`rand_chacha::ChaCha8Rng`, whose output
//! is value-stable across platforms and versions). Standard normals come from
//! the ziggurat sampler `rand_distr::StandardNormal`.
//!
//! The constants are the usual SplitMix64 ones:
//!
//! ```text
//! golden   = 0x9E37_79B9_7F4A_7C15
//! z = (z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9
//! z = (z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB
//! z =  z ^ (z >> 31)
//! ```
//!
//! Streams with different ids share no state, so ensembles can be split over
//! threads in any order and still reproduce bit for bit.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a seed and a stream id into one 64-bit key.
pub fn mix(seed: u64, stream_id: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream_id.wrapping_add(1).wrapping_mul(GOLDEN)))
}

#[derive(Clone, Debug)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut state = mix(seed, stream_id);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(GOLDEN);
            chunk.copy_from_slice(&splitmix64(state).to_le_bytes());
        }
        Self {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_pair_same_stream() {
        let mut a = StreamRng::new(7, 3);
        let mut b = StreamRng::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }

    #[test]
    fn neighbouring_ids_differ() {
        assert_ne!(mix(1, 0), mix(1, 1));
        assert_ne!(mix(0, 1), mix(1, 0));
        let mut a = StreamRng::new(1, 0);
        let mut b = StreamRng::new(1, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn normal_moments() {
        let mut r = StreamRng::new(11, 0);
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = r.normal();
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.02);
    }
}
