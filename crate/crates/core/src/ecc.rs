// SPDX-License-Identifier: Apache-2.0

//! Segment-majority error correction for SRAM start-up values.
//!
//! Enrollment splits the golden value into non-overlapping `N`-bit segments,
//! picks each segment's representative bit (1 iff ones ≥ zeros), and stores
//! `D_s = repSeg_s ⊕ s` where `repSeg_s` is the representative bit repeated
//! `N` times. Correction XORs each noisy segment with its `D_s` and takes the
//! majority again, with the same tie rule.
//!
//! A segment is recovered exactly when it carries at most `⌊(N−1)/2⌋` bit
//! errors. With exactly `N/2` errors the corrected segment is a tie, which
//! resolves to 1: recovery then succeeds iff the representative bit was 1.
//!
//! `D_s` reveals `s` up to global complement, so the correction data is
//! treated as public challenge material.

use crate::entropy::Bits;
use crate::error::{Error, Result};

/// Segment size used throughout unless a challenge set overrides it.
pub const DEFAULT_SEGMENT_BITS: usize = 8;

/// Error-correction data: one `N`-bit word per segment, concatenated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EccData {
    segment_bits: usize,
    data: Bits,
}

/// Corrected start-up value: one representative bit per segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectedValue(pub Bits);

impl CorrectedValue {
    pub fn bits(&self) -> &Bits {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl EccData {
    pub fn from_parts(segment_bits: usize, data: Bits) -> Result<Self> {
        check_shape(data.len(), segment_bits)?;
        Ok(EccData { segment_bits, data })
    }

    pub fn segment_bits(&self) -> usize {
        self.segment_bits
    }

    /// Total length in bits (equals the start-up value length).
    pub fn bit_len(&self) -> usize {
        self.data.len()
    }

    pub fn segments(&self) -> usize {
        self.data.len() / self.segment_bits
    }

    /// `D_s` for segment `s` as a bit slice.
    pub fn segment(&self, s: usize) -> &bitvec::slice::BitSlice<u8, bitvec::order::Msb0> {
        &self.data[s * self.segment_bits..(s + 1) * self.segment_bits]
    }

    pub fn as_bits(&self) -> &Bits {
        &self.data
    }

    /// Raw bytes, MSB-first. At `N = 8` there is one byte per golden byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.clone().into_vec()
    }
}

fn check_shape(len: usize, segment_bits: usize) -> Result<()> {
    if segment_bits < 2 {
        return Err(Error::InvalidArgument(format!("segment size {segment_bits} < 2")));
    }
    if len == 0 || !len.is_multiple_of(segment_bits) {
        return Err(Error::InvalidLength(format!(
            "{len} bits is not a positive multiple of the {segment_bits}-bit segment"
        )));
    }
    Ok(())
}

fn majority(ones: usize, n: usize) -> bool {
    ones >= n - ones
}

/// Generates correction data from the golden start-up value.
pub fn gen_err_corr_data(golden: &Bits, segment_bits: usize) -> Result<EccData> {
    check_shape(golden.len(), segment_bits)?;
    let mut data = Bits::with_capacity(golden.len());
    for seg in golden.chunks_exact(segment_bits) {
        let rep = majority(seg.count_ones(), segment_bits);
        data.extend(seg.iter().map(|b| *b != rep));
    }
    Ok(EccData { segment_bits, data })
}

/// Corrects a noisy start-up value into one representative bit per segment.
pub fn corr_startup_val(noisy: &Bits, segment_bits: usize, ecc: &EccData) -> Result<CorrectedValue> {
    check_shape(noisy.len(), segment_bits)?;
    if segment_bits != ecc.segment_bits || noisy.len() != ecc.data.len() {
        return Err(Error::InvalidLength(format!(
            "start-up value {} bits / N={segment_bits} does not match correction data {} bits / N={}",
            noisy.len(),
            ecc.data.len(),
            ecc.segment_bits
        )));
    }
    let cv = noisy
        .chunks_exact(segment_bits)
        .zip(ecc.data.chunks_exact(segment_bits))
        .map(|(s, d)| {
            let ones = s.iter().zip(d.iter()).filter(|(a, b)| **a != **b).count();
            majority(ones, segment_bits)
        })
        .collect();
    Ok(CorrectedValue(cv))
}

/// Segment-wise majority of a value, the reference output of correction.
pub fn segment_majority(value: &Bits, segment_bits: usize) -> Result<CorrectedValue> {
    check_shape(value.len(), segment_bits)?;
    Ok(CorrectedValue(
        value
            .chunks_exact(segment_bits)
            .map(|s| majority(s.count_ones(), segment_bits))
            .collect(),
    ))
}
