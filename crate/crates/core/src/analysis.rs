// SPDX-License-Identifier: Apache-2.0

//! Hamming statistics and experiment reproduction: uniqueness with and
//! without the hash stage, the DRAM-only baseline, intra/inter distributions
//! under varying temperature, CRP counting and TPR/FPR.

use std::io;

use num_bigint::BigUint;
use rayon::prelude::*;

use crate::authenticator::{enroll, AuthOutcome, CrpDatabase};
use crate::entropy::{dram_refresh_pause, DeviceInstance, Environment};
use crate::error::{Error, Result};
use crate::pipeline::{trace_response, Challenge, HashStage};
use crate::prf::derive_seed;

/// Number of differing bits between two equal-length byte strings.
pub fn hamming_distance(a: &[u8], b: &[u8]) -> Result<u64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("lengths {} and {} differ", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as u64).sum())
}

/// Population mean and standard deviation; `(0, 0)` for an empty slice.
pub fn mean_std(xs: &[u64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One pairwise comparison. `other` is `None` for intra-device comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub device: u64,
    pub other: Option<u64>,
    pub challenge_id: u64,
    pub temperature_c: f64,
    pub hd: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HdDistribution {
    pub comparisons: Vec<Comparison>,
    pub response_bits: u64,
    pub bin_width: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub start: u64,
    pub count: usize,
    pub relative_frequency: f64,
}

impl HdDistribution {
    /// Bin width defaults to `response_bits / 512` (at least 1).
    pub fn new(mut comparisons: Vec<Comparison>, response_bits: u64) -> Self {
        comparisons.sort_by(|a, b| {
            (a.device, a.other, a.challenge_id)
                .cmp(&(b.device, b.other, b.challenge_id))
                .then(a.temperature_c.total_cmp(&b.temperature_c))
        });
        HdDistribution { comparisons, response_bits, bin_width: (response_bits / 512).max(1) }
    }

    pub fn hds(&self) -> impl Iterator<Item = u64> + '_ {
        self.comparisons.iter().map(|c| c.hd)
    }

    pub fn min(&self) -> Option<u64> {
        self.hds().min()
    }

    pub fn max(&self) -> Option<u64> {
        self.hds().max()
    }

    pub fn mean(&self) -> f64 {
        mean_std(&self.hds().collect::<Vec<_>>()).0
    }

    /// Non-empty bins in ascending order; frequencies sum to 1.
    pub fn histogram(&self) -> Vec<Bin> {
        let total = self.comparisons.len();
        let mut bins: std::collections::BTreeMap<u64, usize> = Default::default();
        for hd in self.hds() {
            *bins.entry(hd / self.bin_width * self.bin_width).or_default() += 1;
        }
        bins.into_iter()
            .map(|(start, count)| Bin { start, count, relative_frequency: count as f64 / total as f64 })
            .collect()
    }

    /// One row per comparison:
    /// `kind,device,other,challenge_id,temperature_c,hd,hd_fraction`.
    pub fn write_csv<W: io::Write>(&self, kind: &str, w: W) -> io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["kind", "device", "other", "challenge_id", "temperature_c", "hd", "hd_fraction"])?;
        for c in &self.comparisons {
            out.write_record([
                kind.to_string(),
                c.device.to_string(),
                c.other.map(|o| o.to_string()).unwrap_or_default(),
                c.challenge_id.to_string(),
                c.temperature_c.to_string(),
                c.hd.to_string(),
                format!("{:.6}", c.hd as f64 / self.response_bits as f64),
            ])?;
        }
        out.flush()
    }

    /// `bin_start,bin_end,count,relative_frequency`.
    pub fn write_histogram_csv<W: io::Write>(&self, w: W) -> io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bin_start", "bin_end", "count", "relative_frequency"])?;
        for b in self.histogram() {
            out.write_record([
                b.start.to_string(),
                (b.start + self.bin_width).to_string(),
                b.count.to_string(),
                format!("{:.9}", b.relative_frequency),
            ])?;
        }
        out.flush()
    }
}

/// Identifier of a device in reports: its manufacturing seed.
fn device_label(d: &DeviceInstance) -> u64 {
    d.manufacturing_seed
}

/// Fresh noise seed for one device answering one challenge.
fn attempt_noise(env: &Environment, device: &DeviceInstance, challenge_id: u64) -> Environment {
    let per_device = derive_seed(env.noise_seed, "attempt", device.manufacturing_seed ^ device.dram_seed.rotate_left(29));
    env.with_noise_seed(derive_seed(per_device, "challenge", challenge_id))
}

fn response_bits(dbs: &[CrpDatabase]) -> u64 {
    dbs.iter()
        .flat_map(|db| db.records.first())
        .map(|r| r.golden_response.bitstream_r.len() as u64 * 8)
        .next()
        .unwrap_or(0)
}

/// Intra-device comparisons only: each device answers its own database's
/// challenges at every environment.
pub fn intra_distribution(devices: &[DeviceInstance], dbs: &[CrpDatabase], envs: &[Environment]) -> Result<HdDistribution> {
    if devices.len() != dbs.len() || devices.is_empty() {
        return Err(Error::InvalidArgument("need one database per device".into()));
    }
    let jobs: Vec<(usize, usize, &Environment)> = (0..devices.len())
        .flat_map(|i| (0..dbs[i].records.len()).flat_map(move |r| envs.iter().map(move |e| (i, r, e))))
        .collect();
    let comparisons = jobs
        .par_iter()
        .map(|&(i, r, env)| {
            let rec = &dbs[i].records[r];
            let e = attempt_noise(env, &devices[i], rec.challenge.id);
            let resp = trace_response(&devices[i], &rec.challenge, &e, HashStage::Enabled)?.response;
            Ok(Comparison {
                device: device_label(&devices[i]),
                other: None,
                challenge_id: rec.challenge.id,
                temperature_c: env.temperature_c,
                hd: hamming_distance(&resp.bitstream_r, &rec.golden_response.bitstream_r)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HdDistribution::new(comparisons, response_bits(dbs)))
}

/// Inter-device comparisons: every other device answers the challenges of
/// device `i`'s database (as an impostor claiming to be `i`) and is compared
/// with `i`'s golden responses.
pub fn inter_distribution(devices: &[DeviceInstance], dbs: &[CrpDatabase], envs: &[Environment]) -> Result<HdDistribution> {
    if devices.len() < 2 {
        return Err(Error::InvalidArgument("inter-device comparison needs at least 2 devices".into()));
    }
    if devices.len() != dbs.len() {
        return Err(Error::InvalidArgument("need one database per device".into()));
    }
    let n = devices.len();
    let jobs: Vec<(usize, usize, usize, &Environment)> = (0..n)
        .flat_map(|i| {
            (0..n).filter(move |&j| j != i).flat_map(move |j| {
                (0..dbs[i].records.len()).flat_map(move |r| envs.iter().map(move |e| (i, j, r, e)))
            })
        })
        .collect();
    let comparisons = jobs
        .par_iter()
        .map(|&(i, j, r, env)| {
            let rec = &dbs[i].records[r];
            let e = attempt_noise(env, &devices[j], rec.challenge.id);
            let resp = trace_response(&devices[j], &rec.challenge, &e, HashStage::Enabled)?.response;
            Ok(Comparison {
                device: device_label(&devices[i]),
                other: Some(device_label(&devices[j])),
                challenge_id: rec.challenge.id,
                temperature_c: env.temperature_c,
                hd: hamming_distance(&resp.bitstream_r, &rec.golden_response.bitstream_r)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HdDistribution::new(comparisons, response_bits(dbs)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntraInterReport {
    pub intra: HdDistribution,
    pub inter: HdDistribution,
}

impl IntraInterReport {
    pub fn max_intra(&self) -> u64 {
        self.intra.max().unwrap_or(0)
    }

    pub fn min_inter(&self) -> u64 {
        self.inter.min().unwrap_or(0)
    }

    /// `min inter − max intra`; negative when the distributions overlap.
    pub fn gap(&self) -> i64 {
        self.min_inter() as i64 - self.max_intra() as i64
    }
}

pub fn intra_inter_report(devices: &[DeviceInstance], dbs: &[CrpDatabase], envs: &[Environment]) -> Result<IntraInterReport> {
    let inter = inter_distribution(devices, dbs, envs)?;
    let intra = intra_distribution(devices, dbs, envs)?;
    Ok(IntraInterReport { intra, inter })
}

/// Pairwise comparison of responses of different devices to the same
/// challenge templates, each device using its own correction data.
pub fn uniqueness(
    devices: &[DeviceInstance],
    templates: &[Challenge],
    env: &Environment,
    hash: HashStage,
) -> Result<HdDistribution> {
    if devices.len() < 2 {
        return Err(Error::InvalidArgument("uniqueness needs at least 2 devices".into()));
    }
    let responses: Vec<Vec<Vec<u8>>> = devices
        .par_iter()
        .map(|d| {
            enroll(d, templates, env)?
                .iter()
                .map(|rec| {
                    let e = attempt_noise(env, d, rec.challenge.id);
                    Ok(trace_response(d, &rec.challenge, &e, hash)?.response.bitstream_r)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut comparisons = Vec::new();
    for i in 0..devices.len() {
        for j in i + 1..devices.len() {
            for (k, t) in templates.iter().enumerate() {
                let (a, b) = ordered(&devices[i], &devices[j]);
                comparisons.push(Comparison {
                    device: a,
                    other: Some(b),
                    challenge_id: t.id,
                    temperature_c: env.temperature_c,
                    hd: hamming_distance(&responses[i][k], &responses[j][k])?,
                });
            }
        }
    }
    let bits = templates.first().map(|t| t.size_d() * 8).unwrap_or(0);
    Ok(HdDistribution::new(comparisons, bits))
}

fn ordered(a: &DeviceInstance, b: &DeviceInstance) -> (u64, u64) {
    let (x, y) = (device_label(a), device_label(b));
    (x.min(y), x.max(y))
}

/// DRAM-only PUF: each challenge's `Bitstream_C` is written unchanged (no
/// SRAM involvement), refresh is paused, and readouts of different devices
/// are compared pairwise.
pub fn dram_only_baseline(devices: &[DeviceInstance], challenges: &[Challenge], env: &Environment) -> Result<HdDistribution> {
    if devices.len() < 2 {
        return Err(Error::InvalidArgument("baseline needs at least 2 devices".into()));
    }
    let readouts: Vec<Vec<Vec<u8>>> = devices
        .par_iter()
        .map(|d| {
            challenges
                .iter()
                .map(|c| dram_refresh_pause(d, c.dram_region(), &c.bitstream_c, c.wrapper, c.refresh_pause_s, env))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut comparisons = Vec::new();
    for i in 0..devices.len() {
        for j in i + 1..devices.len() {
            for (k, c) in challenges.iter().enumerate() {
                let (a, b) = ordered(&devices[i], &devices[j]);
                comparisons.push(Comparison {
                    device: a,
                    other: Some(b),
                    challenge_id: c.id,
                    temperature_c: env.temperature_c,
                    hd: hamming_distance(&readouts[i][k], &readouts[j][k])?,
                });
            }
        }
    }
    let bits = challenges.first().map(|c| c.size_d() * 8).unwrap_or(0);
    Ok(HdDistribution::new(comparisons, bits))
}

/// Number of challenge-response pairs of the combined PUF versus separate
/// SRAM and DRAM PUFs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrpCount {
    pub sram_crps: BigUint,
    pub dram_crps: BigUint,
    /// `A × B`.
    pub combined: BigUint,
    /// `A + B`.
    pub alternative: BigUint,
}

impl CrpCount {
    /// `floor(log2(x))` of a count.
    pub fn log2_floor(x: &BigUint) -> u64 {
        x.bits().saturating_sub(1)
    }
}

pub fn crp_count(
    sram_bytes: u64,
    size_s: u64,
    dram_bytes: u64,
    size_d: u64,
    n_wrappers: u64,
    n_pause_intervals: u64,
) -> Result<CrpCount> {
    if [sram_bytes, size_s, dram_bytes, size_d, n_wrappers, n_pause_intervals].contains(&0) {
        return Err(Error::InvalidArgument("all counts must be positive".into()));
    }
    if !sram_bytes.is_multiple_of(size_s) || !dram_bytes.is_multiple_of(size_d) {
        return Err(Error::InvalidArgument(format!(
            "block sizes {size_s} / {size_d} must divide {sram_bytes} / {dram_bytes}"
        )));
    }
    let a = BigUint::from(sram_bytes / size_s);
    let b = BigUint::from(dram_bytes / size_d) * BigUint::from(n_wrappers) * BigUint::from(n_pause_intervals);
    Ok(CrpCount { combined: &a * &b, alternative: &a + &b, sram_crps: a, dram_crps: b })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    Genuine,
    Impostor,
}

/// `(TPR, FPR)`: accepted genuine / genuine and accepted impostor / impostor.
pub fn tpr_fpr(outcomes: &[(Truth, AuthOutcome)]) -> Result<(f64, f64)> {
    let count = |t: Truth| outcomes.iter().filter(|(k, _)| *k == t).count();
    let accepted = |t: Truth| outcomes.iter().filter(|(k, o)| *k == t && o.accepted).count();
    let (g, i) = (count(Truth::Genuine), count(Truth::Impostor));
    if g == 0 || i == 0 {
        return Err(Error::InvalidArgument(format!("{g} genuine and {i} impostor outcomes; need both")));
    }
    Ok((accepted(Truth::Genuine) as f64 / g as f64, accepted(Truth::Impostor) as f64 / i as f64))
}
