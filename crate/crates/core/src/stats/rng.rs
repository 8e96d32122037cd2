//! Labelled random streams.
//!
//! `derive_stream(master_seed, label)` is defined as:
//!
//! 1. `h = FNV-1a-64(label bytes)` (offset `0xcbf29ce484222325`, prime
//!    `0x100000001b3`);
//! 2. `x = master_seed XOR h`;
//! 3. the 32-byte ChaCha8 key is the little-endian concatenation of the first
//!    four SplitMix64 outputs started from state `x`;
//! 4. the stream is ChaCha8 with that key and a zero nonce.
//!
//! Uniform reals are `(next_u64 >> 11) * 2^-53`, bounded integers use
//! Lemire's multiply-and-reject method. Streams never share state, so the
//! values drawn from one stream do not depend on what other streams did.

use alloc::string::String;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A deterministic random stream identified by `(master_seed, label)`.
#[derive(Clone)]
pub struct RngStream {
    master_seed: u64,
    label: String,
    counter: u64,
    rng: ChaCha8Rng,
}

impl fmt::Debug for RngStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RngStream")
            .field("master_seed", &self.master_seed)
            .field("label", &self.label)
            .field("counter", &self.counter)
            .finish()
    }
}

pub fn derive_stream(master_seed: u64, label: &str) -> RngStream {
    let mut state = master_seed ^ fnv1a64(label.as_bytes());
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    RngStream {
        master_seed,
        label: label.into(),
        counter: 0,
        rng: ChaCha8Rng::from_seed(key),
    }
}

impl RngStream {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Number of 64-bit words drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Fisher–Yates shuffle, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let w = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::format;
    use alloc::vec::Vec;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn same_seed_and_label_repeat() {
        let mut a = derive_stream(42, "boot/0");
        let mut b = derive_stream(42, "boot/0");
        let xs: Vec<u64> = (0..100).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..100).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_eq!(a.counter(), 100);
    }

    #[test]
    fn distinct_labels_have_distinct_first_draws() {
        let firsts: BTreeSet<u64> = (0..1000)
            .map(|i| derive_stream(42, &format!("label/{i}")).next_u64())
            .collect();
        assert_eq!(firsts.len(), 1000);
        assert_ne!(
            derive_stream(7, "a").next_u64(),
            derive_stream(7, "b").next_u64()
        );
    }

    #[test]
    fn uniform_draws_pass_ks() {
        let mut s = derive_stream(42, "ks");
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n).map(|_| s.uniform()).collect();
        xs.sort_by(f64::total_cmp);
        let mut d: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            assert!((0.0..1.0).contains(&x));
            let lo = x - i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64 - x;
            d = d.max(lo).max(hi);
        }
        assert!(d < 0.01, "KS statistic {d}");
    }

    #[test]
    fn below_stays_in_range_and_hits_every_value() {
        let mut s = derive_stream(1, "below");
        let mut seen = [0usize; 7];
        for _ in 0..7000 {
            seen[s.index(7)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800 && c < 1200), "{seen:?}");
    }
}
