// SPDX-License-Identifier: Apache-2.0

//! Counter-based keyed pseudorandom function.
//!
//! Every per-cell quantity in the simulator is a pure function of
//! `(seed, stream, index)`, so a 1 GiB array never has to be materialised:
//! a cell's parameters are recomputed on demand from its address.
//!
//! The mixer is a few rounds of the splitmix64 finalizer. It is fast and has
//! good avalanche behaviour but is not cryptographic.

use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::OnceLock;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const INDEX_MUL: u64 = 0xD6E8_FEB8_6659_FD93;

#[inline(always)]
fn fmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named, independent sub-streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    SramSkew,
    SramAging,
    SramNoise,
    Dram,
    /// Free-form label used for seed fan-out (campaign plumbing).
    Label(u64),
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::SramSkew => 0x7372_616d_0001, // "sram"
            Stream::SramAging => 0x6167_696e_0002,
            Stream::SramNoise => 0x6e6f_6973_0003,
            Stream::Dram => 0x6472_616d_0004,
            Stream::Label(l) => fmix(l ^ 0x6c61_6265_6c00),
        }
    }
}

/// A stream key: seed and stream tag folded together once, then reused for
/// every index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Key(u64);

impl Key {
    pub fn new(seed: u64, stream: Stream) -> Self {
        Key(fmix(fmix(seed.wrapping_add(GOLDEN)) ^ stream.tag()))
    }

    #[inline(always)]
    pub fn word(self, index: u64) -> u64 {
        let x = fmix(self.0 ^ index.wrapping_mul(INDEX_MUL));
        fmix(x.wrapping_add(self.0.rotate_left(23)))
    }

    /// Uniform in the open interval (0, 1), 53 bits of resolution.
    #[inline(always)]
    pub fn uniform(self, index: u64) -> f64 {
        ((self.word(index) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(self, index: u64) -> f64 {
        standard_normal().inverse_cdf(self.uniform(index))
    }
}

/// Derives a child seed from a parent seed and a textual label.
pub fn derive_seed(parent: u64, label: &str, index: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in label.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    Key::new(parent, Stream::Label(h)).word(index)
}

pub(crate) fn standard_normal() -> &'static Normal {
    static N: OnceLock<Normal> = OnceLock::new();
    N.get_or_init(|| Normal::new(0.0, 1.0).expect("unit normal"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_are_pure() {
        let k = Key::new(7, Stream::SramSkew);
        assert_eq!(k.word(1234), Key::new(7, Stream::SramSkew).word(1234));
        assert_ne!(k.word(1234), k.word(1235));
        assert_ne!(k.word(1234), Key::new(7, Stream::Dram).word(1234));
        assert_ne!(k.word(1234), Key::new(8, Stream::SramSkew).word(1234));
    }

    #[test]
    fn uniform_moments() {
        let k = Key::new(42, Stream::Dram);
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let u = k.uniform(i);
            assert!(u > 0.0 && u < 1.0);
            s += u;
            s2 += u * u;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.002, "var {var}");
    }

    #[test]
    fn normal_moments() {
        let k = Key::new(3, Stream::SramSkew);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|i| k.standard_normal(i)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.03);
    }

    #[test]
    fn bit_balance_per_position() {
        let k = Key::new(99, Stream::SramNoise);
        let n = 50_000u64;
        let mut counts = [0u32; 64];
        for i in 0..n {
            let w = k.word(i);
            for (b, c) in counts.iter_mut().enumerate() {
                *c += ((w >> b) & 1) as u32;
            }
        }
        for c in counts {
            let frac = c as f64 / n as f64;
            assert!((frac - 0.5).abs() < 0.015, "bias {frac}");
        }
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, "noise", 0), derive_seed(1, "noise", 1));
        assert_ne!(derive_seed(1, "noise", 0), derive_seed(1, "manufacturing", 0));
        assert_eq!(derive_seed(5, "x", 3), derive_seed(5, "x", 3));
    }
}
