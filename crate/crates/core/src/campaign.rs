// SPDX-License-Identifier: Apache-2.0

//! Seed fan-out and random challenge templates for experiment campaigns.

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ecc::DEFAULT_SEGMENT_BITS;
use crate::entropy::{WrapperPattern, GUARD_BYTES};
use crate::error::{Error, Result};
use crate::pipeline::{Challenge, DEFAULT_REFRESH_PAUSE_S, DEFAULT_SIZE_S, HASH_CHUNK};
use crate::prf::derive_seed;

/// Independent seed streams fanned out from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPlan {
    pub master: u64,
}

impl SeedPlan {
    pub fn new(master: u64) -> Self {
        SeedPlan { master }
    }

    pub fn manufacturing(&self, device_index: u64) -> u64 {
        derive_seed(self.master, "manufacturing", device_index)
    }

    pub fn noise(&self, run: u64) -> u64 {
        derive_seed(self.master, "noise", run)
    }

    pub fn templates(&self, set: u64) -> u64 {
        derive_seed(self.master, "challenge-template", set)
    }

    pub fn counterfeit(&self, index: u64) -> u64 {
        derive_seed(self.master, "counterfeit", index)
    }

    pub fn session(&self, index: u64) -> u64 {
        derive_seed(self.master, "session", index)
    }
}

/// Shape of the random templates of one enrollment epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSpec {
    pub count: usize,
    pub size_s: u64,
    pub size_d: u64,
    pub segment_bits: usize,
    pub wrapper: WrapperPattern,
    pub refresh_pause_s: f64,
    /// SRAM block shared by every challenge of the epoch; drawn at random
    /// (aligned to `size_s`) when `None`.
    pub addr_s: Option<u64>,
}

impl TemplateSpec {
    pub fn new(count: usize, size_d: u64) -> Self {
        TemplateSpec {
            count,
            size_s: DEFAULT_SIZE_S,
            size_d,
            segment_bits: DEFAULT_SEGMENT_BITS,
            wrapper: WrapperPattern::AllOnes,
            refresh_pause_s: DEFAULT_REFRESH_PAUSE_S,
            addr_s: None,
        }
    }
}

/// Draws `spec.count` templates with ids `0..count`, random `Bitstream_C`
/// and distinct `size_d`-aligned DRAM blocks that leave room for the guard
/// bands.
pub fn random_templates(seed: u64, spec: &TemplateSpec, sram_bytes: u64, dram_bytes: u64) -> Result<Vec<Challenge>> {
    if spec.size_d == 0 || !spec.size_d.is_multiple_of(HASH_CHUNK as u64) {
        return Err(Error::InvalidLength(format!("Size_D {} is not a multiple of {HASH_CHUNK}", spec.size_d)));
    }
    if spec.size_s == 0 || spec.size_s > sram_bytes {
        return Err(Error::OutOfRange(format!("Size_S {} vs SRAM {sram_bytes} B", spec.size_s)));
    }
    // Blocks 1..blocks-1 keep a full block of slack on both sides, which
    // covers the 64-byte guard bands whenever size_d >= 64.
    let blocks = dram_bytes / spec.size_d;
    let usable: Vec<u64> = (1..blocks.saturating_sub(1))
        .map(|b| b * spec.size_d)
        .filter(|&a| a >= GUARD_BYTES && a + spec.size_d + GUARD_BYTES <= dram_bytes)
        .collect();
    if usable.len() < spec.count {
        return Err(Error::OutOfRange(format!(
            "DRAM of {dram_bytes} B holds only {} usable {}-byte blocks, {} requested",
            usable.len(),
            spec.size_d,
            spec.count
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let addr_s = match spec.addr_s {
        Some(a) => a,
        None => rng.random_range(0..sram_bytes / spec.size_s) * spec.size_s,
    };
    let picks = sample(&mut rng, usable.len(), spec.count);
    Ok(picks
        .iter()
        .enumerate()
        .map(|(id, b)| {
            let mut bitstream_c = vec![0u8; spec.size_d as usize];
            rng.fill_bytes(&mut bitstream_c);
            Challenge {
                id: id as u64,
                addr_s,
                size_s: spec.size_s,
                segment_bits: spec.segment_bits,
                ecc_data: None,
                bitstream_c,
                addr_d: usable[b],
                wrapper: spec.wrapper,
                refresh_pause_s: spec.refresh_pause_s,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_are_deterministic_and_valid() {
        let spec = TemplateSpec::new(10, 16 * 1024);
        let a = random_templates(5, &spec, 2 << 20, 1 << 30).unwrap();
        let b = random_templates(5, &spec, 2 << 20, 1 << 30).unwrap();
        assert_eq!(a, b);
        let dev = crate::entropy::forge_device(1, 2 << 20, 1 << 30).unwrap();
        let mut blocks: Vec<u64> = a.iter().map(|c| c.addr_d).collect();
        blocks.sort();
        blocks.dedup();
        assert_eq!(blocks.len(), 10);
        assert!(a.iter().all(|c| c.addr_s == a[0].addr_s && c.addr_s % 32 == 0));
        for c in &a {
            c.validate(&dev).unwrap();
        }
        assert_ne!(a, random_templates(6, &spec, 2 << 20, 1 << 30).unwrap());
    }

    #[test]
    fn too_many_templates() {
        let spec = TemplateSpec::new(10, 1024);
        assert!(random_templates(1, &spec, 1024, 8 * 1024).is_err());
    }

    #[test]
    fn seed_streams_are_distinct() {
        let p = SeedPlan::new(1);
        assert_ne!(p.manufacturing(0), p.noise(0));
        assert_ne!(p.manufacturing(0), p.manufacturing(1));
        assert_ne!(p.templates(0), p.counterfeit(0));
    }
}
