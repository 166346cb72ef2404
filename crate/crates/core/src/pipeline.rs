// SPDX-License-Identifier: Apache-2.0

//! Challenge-response generation.
//!
//! A response is produced in seven steps: the challenge arrives, the SRAM
//! block at `addr_s` is power-cycled, the noisy start-up value is corrected
//! with the challenge's correction data, the corrected value is XORed
//! cyclically over `Bitstream_C`, the result is hashed in 32-byte chunks, the
//! hashed value is written to the DRAM block at `addr_d` between two wrapper
//! guard bands and refresh is paused, and the readout is returned with the
//! challenge id.

use sha2::{Digest, Sha256};

use crate::ecc::{self, CorrectedValue, EccData, DEFAULT_SEGMENT_BITS};
use crate::entropy::{self, Bits, DeviceInstance, Environment, MemoryRegion};
use crate::error::{Error, Result};

pub use crate::entropy::WrapperPattern;

/// Hash chunk size in bytes, equal to the SHA-256 digest size.
pub const HASH_CHUNK: usize = 32;

/// Default SRAM block size in bytes.
pub const DEFAULT_SIZE_S: u64 = 32;
/// Default DRAM block size in bytes.
pub const DEFAULT_SIZE_D: u64 = 128 * 1024;
/// Default refresh pause in seconds.
pub const DEFAULT_REFRESH_PAUSE_S: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Challenge {
    pub id: u64,
    pub addr_s: u64,
    pub size_s: u64,
    pub segment_bits: usize,
    /// `None` for an enrollment template, filled in by enrollment.
    pub ecc_data: Option<EccData>,
    /// Random data of `size_d` bytes.
    pub bitstream_c: Vec<u8>,
    pub addr_d: u64,
    pub wrapper: WrapperPattern,
    pub refresh_pause_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub id: u64,
    pub bitstream_r: Vec<u8>,
}

impl Challenge {
    /// A template without correction data and with default SRAM/pause knobs.
    pub fn template(id: u64, addr_s: u64, bitstream_c: Vec<u8>, addr_d: u64) -> Self {
        Challenge {
            id,
            addr_s,
            size_s: DEFAULT_SIZE_S,
            segment_bits: DEFAULT_SEGMENT_BITS,
            ecc_data: None,
            bitstream_c,
            addr_d,
            wrapper: WrapperPattern::AllOnes,
            refresh_pause_s: DEFAULT_REFRESH_PAUSE_S,
        }
    }

    pub fn size_d(&self) -> u64 {
        self.bitstream_c.len() as u64
    }

    pub fn sram_region(&self) -> MemoryRegion {
        MemoryRegion::new(self.addr_s, self.size_s)
    }

    pub fn dram_region(&self) -> MemoryRegion {
        MemoryRegion::new(self.addr_d, self.size_d())
    }

    /// Checks everything except the presence of correction data.
    pub fn validate(&self, device: &DeviceInstance) -> Result<()> {
        if self.segment_bits < 2 {
            return Err(Error::InvalidArgument(format!("segment size {}", self.segment_bits)));
        }
        if self.size_s == 0 || !(self.size_s * 8).is_multiple_of(self.segment_bits as u64) {
            return Err(Error::InvalidLength(format!(
                "Size_S {} B is not a multiple of the {}-bit segment",
                self.size_s, self.segment_bits
            )));
        }
        if self.bitstream_c.is_empty() || !self.bitstream_c.len().is_multiple_of(HASH_CHUNK) {
            return Err(Error::InvalidLength(format!(
                "Size_D {} B is not a positive multiple of {HASH_CHUNK}",
                self.bitstream_c.len()
            )));
        }
        if !(self.refresh_pause_s.is_finite() && self.refresh_pause_s >= 0.0) {
            return Err(Error::InvalidArgument(format!("refresh pause {}", self.refresh_pause_s)));
        }
        let sram = self.sram_region();
        if sram.end() > device.sram_bytes {
            return Err(Error::OutOfRange(format!(
                "SRAM block [{}, +{}) exceeds {} bytes",
                sram.start, sram.len, device.sram_bytes
            )));
        }
        device.check_dram_block(&self.dram_region())?;
        if let Some(ecc) = &self.ecc_data {
            if ecc.segment_bits() != self.segment_bits || ecc.bit_len() as u64 != self.size_s * 8 {
                return Err(Error::InvalidLength(
                    "correction data does not match Size_S / segment size".into(),
                ));
            }
        }
        Ok(())
    }
}

/// XORs the corrected value, tiled cyclically from bit 0, over `bitstream_c`.
pub fn xor_stage(cv: &CorrectedValue, bitstream_c: &[u8]) -> Result<Vec<u8>> {
    if cv.is_empty() {
        return Err(Error::InvalidArgument("empty corrected value".into()));
    }
    if bitstream_c.is_empty() {
        return Err(Error::InvalidArgument("empty Bitstream_C".into()));
    }
    let pattern = cv.bits();
    let period = pattern.len();
    let mut out = bitstream_c.to_vec();
    if period.is_multiple_of(8) {
        let tile = pattern.clone().into_vec();
        for (o, t) in out.iter_mut().zip(tile.iter().cycle()) {
            *o ^= t;
        }
    } else {
        let mut j = 0;
        for byte in out.iter_mut() {
            let mut mask = 0u8;
            for b in 0..8 {
                if pattern[j] {
                    mask |= 0x80 >> b;
                }
                j += 1;
                if j == period {
                    j = 0;
                }
            }
            *byte ^= mask;
        }
    }
    Ok(out)
}

/// SHA-256 over each consecutive 32-byte chunk; length-preserving.
pub fn hash_stage(xored: &[u8]) -> Result<Vec<u8>> {
    if !xored.len().is_multiple_of(HASH_CHUNK) {
        return Err(Error::InvalidLength(format!(
            "{} bytes is not a multiple of {HASH_CHUNK}",
            xored.len()
        )));
    }
    let mut out = Vec::with_capacity(xored.len());
    for chunk in xored.chunks_exact(HASH_CHUNK) {
        out.extend_from_slice(&Sha256::digest(chunk));
    }
    Ok(out)
}

/// Whether the HASH stage runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashStage {
    Enabled,
    Bypassed,
}

/// Every intermediate value of one response generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTrace {
    pub startup: Bits,
    pub corrected: CorrectedValue,
    pub xored: Vec<u8>,
    /// Data written to the DRAM block (HV, or the XOR output when hashing is bypassed).
    pub written: Vec<u8>,
    pub response: Response,
}

/// Runs the full pipeline and keeps every intermediate value.
pub fn trace_response(
    device: &DeviceInstance,
    challenge: &Challenge,
    env: &Environment,
    hash: HashStage,
) -> Result<ResponseTrace> {
    challenge.validate(device)?;
    let ecc_data = challenge
        .ecc_data
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("challenge {} has no correction data", challenge.id)))?;
    let startup = entropy::sram_power_up(device, challenge.sram_region(), env)?;
    let corrected = ecc::corr_startup_val(&startup, challenge.segment_bits, ecc_data)?;
    let xored = xor_stage(&corrected, &challenge.bitstream_c)?;
    let written = match hash {
        HashStage::Enabled => hash_stage(&xored)?,
        HashStage::Bypassed => xored.clone(),
    };
    let readout = entropy::dram_refresh_pause(
        device,
        challenge.dram_region(),
        &written,
        challenge.wrapper,
        challenge.refresh_pause_s,
        env,
    )?;
    Ok(ResponseTrace {
        startup,
        corrected,
        xored,
        written,
        response: Response { id: challenge.id, bitstream_r: readout },
    })
}

pub fn generate_response(device: &DeviceInstance, challenge: &Challenge, env: &Environment) -> Result<Response> {
    trace_response(device, challenge, env, HashStage::Enabled).map(|t| t.response)
}

/// The pipeline with the HASH stage skipped: the XOR output goes straight to DRAM.
pub fn generate_response_no_hash(
    device: &DeviceInstance,
    challenge: &Challenge,
    env: &Environment,
) -> Result<Response> {
    trace_response(device, challenge, env, HashStage::Bypassed).map(|t| t.response)
}
