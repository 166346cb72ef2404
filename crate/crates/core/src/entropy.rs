// SPDX-License-Identifier: Apache-2.0

//! Parametric physical models of the two entropy sources.
//!
//! SRAM: every bit `i` has a manufacturing skew `θ_i ~ N(0, 1)`. A power-up
//! reads `1` iff `θ_i + σ(T)·η_i > 0`, where `η_i` is standard normal noise
//! keyed by the environment's noise seed and
//! `σ(T) = σ₀·(1 + κ·|T − T_ref|)`.
//!
//! DRAM: every bit has a log-normal retention time at the reference
//! temperature and an orientation (true-cell or anti-cell). During a refresh
//! pause a cell loses its value iff it holds its charged state and the pause
//! is at least its effective retention
//! `t_i · exp(−λ·(T − T_ref)) · (1 − c·f_i) · aging`, where `f_i` is the
//! fraction of charged horizontal neighbours.
//!
//! Nothing is stored per cell: parameters are recomputed from the seed and
//! the bit address through [`crate::prf::Key`].

use bitvec::prelude::*;
use statrs::distribution::ContinuousCDF;

use crate::error::{Error, Result};
use crate::prf::{self, Key, Stream};

/// Bit-vector type used for start-up values and corrected values: MSB-first
/// within each byte, so bit 0 is the most significant bit of byte 0.
pub type Bits = BitVec<u8, Msb0>;

/// Size in bytes of the wrapper guard band on each side of a DRAM block.
pub const GUARD_BYTES: u64 = 64;

/// Default SRAM size (2 MiB).
pub const DEFAULT_SRAM_BYTES: u64 = 2 << 20;
/// Default DRAM size (1 GiB).
pub const DEFAULT_DRAM_BYTES: u64 = 1 << 30;

/// Calibration constants of the cell models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Power-up noise amplitude at the reference temperature.
    pub sram_sigma0: f64,
    /// Relative growth of the noise amplitude per °C away from the reference.
    pub sram_kappa: f64,
    pub reference_temp_c: f64,
    /// Mean of log10(retention seconds) at the reference temperature.
    pub dram_log10_mu: f64,
    /// Standard deviation of log10(retention seconds).
    pub dram_log10_sigma: f64,
    /// Exponential retention loss per °C.
    pub dram_lambda: f64,
    /// Neighbour coupling strength `c` in `(1 − c·f)`.
    pub wrapper_coupling: f64,
    /// SRAM skew drift per month of age (multiplies a per-cell normal).
    pub aging_sram_drift: f64,
    /// Fractional retention loss per month of age.
    pub aging_dram_drift: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            sram_sigma0: 0.05,
            sram_kappa: 0.015,
            reference_temp_c: 20.0,
            dram_log10_mu: 6000f64.log10(),
            dram_log10_sigma: 0.7,
            dram_lambda: 0.05,
            wrapper_coupling: 0.1,
            aging_sram_drift: 0.005,
            aging_dram_drift: 0.0003,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.sram_sigma0,
            self.sram_kappa,
            self.reference_temp_c,
            self.dram_log10_mu,
            self.dram_log10_sigma,
            self.dram_lambda,
            self.wrapper_coupling,
            self.aging_sram_drift,
            self.aging_dram_drift,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("model constants must be finite".into()));
        }
        if self.sram_sigma0 < 0.0 || self.sram_kappa < 0.0 {
            return Err(Error::InvalidArgument("SRAM noise constants must be >= 0".into()));
        }
        if self.dram_log10_sigma <= 0.0 {
            return Err(Error::InvalidArgument("retention spread must be > 0".into()));
        }
        if self.dram_lambda < 0.0 {
            return Err(Error::InvalidArgument("temperature coefficient must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.wrapper_coupling) {
            return Err(Error::InvalidArgument("wrapper coupling must be in [0, 1)".into()));
        }
        if self.aging_sram_drift < 0.0 || self.aging_dram_drift < 0.0 {
            return Err(Error::InvalidArgument("aging drifts must be >= 0".into()));
        }
        Ok(())
    }

    /// Power-up noise amplitude at `temperature_c`.
    pub fn sram_sigma(&self, temperature_c: f64) -> f64 {
        self.sram_sigma0 * (1.0 + self.sram_kappa * (temperature_c - self.reference_temp_c).abs())
    }

    /// Multiplicative retention factor from temperature.
    pub fn temperature_factor(&self, temperature_c: f64) -> f64 {
        (-self.dram_lambda * (temperature_c - self.reference_temp_c)).exp()
    }

    fn dram_aging_factor(&self, age_months: f64) -> f64 {
        1.0 - self.aging_dram_drift * age_months
    }
}

/// Operating conditions under which a response is generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Environment {
    pub temperature_c: f64,
    pub noise_seed: u64,
}

impl Environment {
    pub const MIN_TEMP_C: f64 = 0.0;
    pub const MAX_TEMP_C: f64 = 100.0;

    pub fn new(temperature_c: f64, noise_seed: u64) -> Result<Self> {
        if !(Self::MIN_TEMP_C..=Self::MAX_TEMP_C).contains(&temperature_c) {
            return Err(Error::OutOfRange(format!(
                "temperature {temperature_c} °C outside [0, 100]"
            )));
        }
        Ok(Environment { temperature_c, noise_seed })
    }

    pub fn with_noise_seed(self, noise_seed: u64) -> Self {
        Environment { noise_seed, ..self }
    }
}

/// A contiguous byte range of SRAM or DRAM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MemoryRegion {
    pub start: u64,
    pub len: u64,
}

impl MemoryRegion {
    pub fn new(start: u64, len: u64) -> Self {
        MemoryRegion { start, len }
    }

    pub fn end(&self) -> u64 {
        self.start + self.len
    }

    fn check_within(&self, limit: u64, what: &str) -> Result<()> {
        if self.len == 0 {
            return Err(Error::InvalidArgument(format!("empty {what} region")));
        }
        match self.start.checked_add(self.len) {
            Some(end) if end <= limit => Ok(()),
            _ => Err(Error::OutOfRange(format!(
                "{what} region [{}, +{}) exceeds {limit} bytes",
                self.start, self.len
            ))),
        }
    }
}

/// Data written in the guard bands around a DRAM block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WrapperPattern {
    AllOnes,
    AllZeros,
    Checkered,
}

impl WrapperPattern {
    pub const ALL: [WrapperPattern; 3] =
        [WrapperPattern::AllOnes, WrapperPattern::AllZeros, WrapperPattern::Checkered];

    pub fn byte(self) -> u8 {
        match self {
            WrapperPattern::AllOnes => 0xFF,
            WrapperPattern::AllZeros => 0x00,
            WrapperPattern::Checkered => 0xAA,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            WrapperPattern::AllOnes => 0,
            WrapperPattern::AllZeros => 1,
            WrapperPattern::Checkered => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(WrapperPattern::AllOnes),
            1 => Ok(WrapperPattern::AllZeros),
            2 => Ok(WrapperPattern::Checkered),
            c => Err(Error::Decode(format!("unknown wrapper code {c}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WrapperPattern::AllOnes => "all-ones",
            WrapperPattern::AllZeros => "all-zeros",
            WrapperPattern::Checkered => "checkered",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all-ones" | "ones" => Some(WrapperPattern::AllOnes),
            "all-zeros" | "zeros" => Some(WrapperPattern::AllZeros),
            "checkered" => Some(WrapperPattern::Checkered),
            _ => None,
        }
    }
}

/// A virtual device: SRAM and DRAM parameter fields keyed by seeds.
///
/// `dram_seed` equals `manufacturing_seed` for a forged device; a
/// counterfeit swap replaces only the DRAM seed.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceInstance {
    pub manufacturing_seed: u64,
    pub dram_seed: u64,
    pub sram_bytes: u64,
    pub dram_bytes: u64,
    pub age_months: f64,
    pub params: ModelParams,
}

/// Forges a device with the default calibration.
pub fn forge_device(manufacturing_seed: u64, sram_bytes: u64, dram_bytes: u64) -> Result<DeviceInstance> {
    forge_device_with(manufacturing_seed, sram_bytes, dram_bytes, ModelParams::default())
}

pub fn forge_device_with(
    manufacturing_seed: u64,
    sram_bytes: u64,
    dram_bytes: u64,
    params: ModelParams,
) -> Result<DeviceInstance> {
    if sram_bytes == 0 || dram_bytes == 0 {
        return Err(Error::InvalidGeometry(format!(
            "sram {sram_bytes} B, dram {dram_bytes} B: both must be > 0"
        )));
    }
    params.validate()?;
    Ok(DeviceInstance {
        manufacturing_seed,
        dram_seed: manufacturing_seed,
        sram_bytes,
        dram_bytes,
        age_months: 0.0,
        params,
    })
}

/// Returns an aged copy of `device`. Drift is a closed-form function of the
/// total age, so aging in steps composes exactly.
pub fn age_device(device: &DeviceInstance, months: f64) -> Result<DeviceInstance> {
    if !(months.is_finite() && months > 0.0) {
        return Err(Error::InvalidArgument(format!("aging by {months} months")));
    }
    let age = device.age_months + months;
    if device.params.dram_aging_factor(age) <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "age {age} months is beyond the drift model's range"
        )));
    }
    Ok(DeviceInstance { age_months: age, ..device.clone() })
}

impl DeviceInstance {
    /// The same device with its DRAM replaced by one made from `dram_seed`.
    pub fn with_dram_seed(&self, dram_seed: u64) -> DeviceInstance {
        DeviceInstance { dram_seed, ..self.clone() }
    }

    fn skew_key(&self) -> Key {
        Key::new(self.manufacturing_seed, Stream::SramSkew)
    }

    fn aging_key(&self) -> Key {
        Key::new(self.manufacturing_seed, Stream::SramAging)
    }

    fn dram_key(&self) -> Key {
        Key::new(self.dram_seed, Stream::Dram)
    }

    /// Skew of SRAM bit `bit_address` including aging drift.
    pub fn sram_skew(&self, bit_address: u64) -> f64 {
        let theta = self.skew_key().standard_normal(bit_address);
        if self.age_months > 0.0 {
            let drift = self.params.aging_sram_drift * self.age_months;
            theta + drift * self.aging_key().standard_normal(bit_address)
        } else {
            theta
        }
    }

    /// Whether DRAM bit `bit_address` stores logical 1 as its charged state.
    pub fn is_true_cell(&self, bit_address: u64) -> bool {
        self.dram_key().word(bit_address) & 1 == 1
    }

    /// Retention time in seconds at `temperature_c`, with aging but without
    /// neighbour coupling. Always strictly positive.
    pub fn retention_seconds(&self, bit_address: u64, temperature_c: f64) -> f64 {
        let p = &self.params;
        let z = self.dram_key().standard_normal(bit_address);
        10f64.powf(p.dram_log10_mu + p.dram_log10_sigma * z)
            * p.temperature_factor(temperature_c)
            * p.dram_aging_factor(self.age_months)
    }

    fn sram_region(&self, region: &MemoryRegion) -> Result<()> {
        region.check_within(self.sram_bytes, "SRAM")
    }

    /// DRAM block plus its guard bands must fit in the DRAM.
    pub fn check_dram_block(&self, region: &MemoryRegion) -> Result<()> {
        region.check_within(self.dram_bytes, "DRAM")?;
        if region.start < GUARD_BYTES || region.end() + GUARD_BYTES > self.dram_bytes {
            return Err(Error::OutOfRange(format!(
                "DRAM block [{}, +{}) leaves no room for {GUARD_BYTES}-byte guard bands",
                region.start, region.len
            )));
        }
        Ok(())
    }
}

/// Noise-free start-up value of a region: bit `i` is `θ_i > 0`.
pub fn sram_golden(device: &DeviceInstance, region: MemoryRegion) -> Result<Bits> {
    device.sram_region(&region)?;
    let base = region.start * 8;
    Ok((0..region.len * 8).map(|j| device.sram_skew(base + j) > 0.0).collect())
}

/// Simulated power-cycle read of an SRAM region.
pub fn sram_power_up(device: &DeviceInstance, region: MemoryRegion, env: &Environment) -> Result<Bits> {
    device.sram_region(&region)?;
    let sigma = device.params.sram_sigma(env.temperature_c);
    if sigma == 0.0 {
        return sram_golden(device, region);
    }
    let noise = Key::new(env.noise_seed, Stream::SramNoise);
    let base = region.start * 8;
    Ok((0..region.len * 8)
        .map(|j| {
            let a = base + j;
            device.sram_skew(a) + sigma * noise.standard_normal(a) > 0.0
        })
        .collect())
}

/// Writes `written` into a DRAM block framed by `wrapper` guard bands,
/// suspends refresh for `pause_seconds` and reads the block back.
pub fn dram_refresh_pause(
    device: &DeviceInstance,
    region: MemoryRegion,
    written: &[u8],
    wrapper: WrapperPattern,
    pause_seconds: f64,
    env: &Environment,
) -> Result<Vec<u8>> {
    if written.len() as u64 != region.len {
        return Err(Error::InvalidArgument(format!(
            "written data is {} bytes, region is {}",
            written.len(),
            region.len
        )));
    }
    if !(pause_seconds.is_finite() && pause_seconds >= 0.0) {
        return Err(Error::InvalidArgument(format!("refresh pause {pause_seconds} s")));
    }
    device.check_dram_block(&region)?;
    let mut out = written.to_vec();
    if pause_seconds == 0.0 {
        return Ok(out);
    }

    let p = &device.params;
    // Cell flips iff u_i <= F(pause / scale), F the reference-temperature
    // log-normal CDF of the retention time and scale the product of all
    // multiplicative factors. One threshold per charged-neighbour count.
    let base_scale = p.temperature_factor(env.temperature_c) * p.dram_aging_factor(device.age_months);
    let thresholds: [f64; 3] = std::array::from_fn(|charged_neighbours| {
        let f = charged_neighbours as f64 / 2.0;
        let scale = base_scale * (1.0 - p.wrapper_coupling * f);
        let z = ((pause_seconds / scale).log10() - p.dram_log10_mu) / p.dram_log10_sigma;
        prf::standard_normal().cdf(z)
    });

    let key = device.dram_key();
    let n = written.len() * 8;
    let first_bit = region.start * 8;
    let wrap = wrapper.byte();
    // Row of n + 2 cells: one guard cell on each side of the block.
    let stored = |k: usize| -> bool {
        if k == 0 {
            wrap & 1 == 1
        } else if k == n + 1 {
            wrap & 0x80 != 0
        } else {
            let i = k - 1;
            written[i / 8] & (0x80 >> (i % 8)) != 0
        }
    };
    let words: Vec<u64> = (0..n + 2).map(|k| key.word(first_bit - 1 + k as u64)).collect();
    let charged: Vec<bool> = (0..n + 2).map(|k| (words[k] & 1 == 1) == stored(k)).collect();

    for i in 0..n {
        let k = i + 1;
        if !charged[k] {
            continue;
        }
        let neighbours = charged[k - 1] as usize + charged[k + 1] as usize;
        let u = ((words[k] >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        if u <= thresholds[neighbours] {
            out[i / 8] ^= 0x80 >> (i % 8);
        }
    }
    Ok(out)
}
