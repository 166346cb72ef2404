// SPDX-License-Identifier: Apache-2.0

//! Enrollment, fuzzy authentication, characterization and reconfiguration.
//!
//! Enrollment builds a CRP database for one device: for every challenge
//! template the noise-free start-up value of the SRAM block becomes the
//! golden start-up value, its correction data is attached to the challenge,
//! and the full pipeline produces the golden response.
//!
//! Authentication replays a stored challenge and accepts iff the Hamming
//! distance to the golden response is at most the match threshold (MT).

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{hamming_distance, mean_std};
use crate::ecc::{self, gen_err_corr_data};
use crate::entropy::{self, Bits, DeviceInstance, Environment};
use crate::error::{Error, Result};
use crate::pipeline::{self, Challenge, Response};
use crate::prf::derive_seed;

/// Default safety multiplier of the dynamic match threshold.
pub const DEFAULT_DYNAMIC_C: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CrpRecord {
    pub challenge: Challenge,
    pub golden_response: Response,
    /// Kept for audit and re-derivation; `None` in hardened databases.
    pub golden_startup: Option<Bits>,
    pub enrollment_env: Environment,
}

impl CrpRecord {
    /// Re-derives the correction data from the stored golden start-up value
    /// and checks it against the challenge. Hardened records pass trivially.
    pub fn check_consistency(&self) -> Result<()> {
        if self.golden_response.id != self.challenge.id {
            return Err(Error::InvalidArgument(format!(
                "response id {} does not echo challenge id {}",
                self.golden_response.id, self.challenge.id
            )));
        }
        let ecc = self
            .challenge
            .ecc_data
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("record without correction data".into()))?;
        if let Some(golden) = &self.golden_startup {
            if &gen_err_corr_data(golden, self.challenge.segment_bits)? != ecc {
                return Err(Error::InvalidArgument(format!(
                    "correction data of challenge {} is not derived from its golden start-up value",
                    self.challenge.id
                )));
            }
        }
        Ok(())
    }
}

/// Per-temperature statistics of intra-device Hamming distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntraStats {
    pub temperature_c: f64,
    pub mean: f64,
    pub std: f64,
    pub max: u64,
}

/// Device-specific threshold: `MT(T) = mean(T) + c·std(T)` using the
/// characterized bucket whose temperature is nearest to `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicThreshold {
    pub c: f64,
    pub buckets: Vec<IntraStats>,
    /// Smallest inter-device HD seen during characterization; every bucket's
    /// threshold must stay below it.
    pub min_inter_hd: u64,
}

impl DynamicThreshold {
    pub fn mt_at(&self, temperature_c: f64) -> u64 {
        let b = self
            .buckets
            .iter()
            .min_by(|a, b| {
                (a.temperature_c - temperature_c)
                    .abs()
                    .total_cmp(&(b.temperature_c - temperature_c).abs())
            })
            .expect("validated policy has buckets");
        (b.mean + self.c * b.std).floor() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchPolicy {
    /// One threshold for every device and operating condition.
    Static { mt: u64 },
    Dynamic(DynamicThreshold),
}

impl MatchPolicy {
    pub fn fixed(mt: u64) -> Self {
        MatchPolicy::Static { mt }
    }

    /// Builds a dynamic policy, rejecting it if any bucket's threshold would
    /// reach the smallest observed inter-device distance.
    pub fn dynamic(buckets: Vec<IntraStats>, c: f64, min_inter_hd: u64) -> Result<Self> {
        if buckets.is_empty() {
            return Err(Error::InvalidPolicy("no characterization buckets".into()));
        }
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidPolicy(format!("safety multiplier {c}")));
        }
        let d = DynamicThreshold { c, buckets, min_inter_hd };
        for b in &d.buckets {
            if !(b.mean.is_finite() && b.std.is_finite() && b.mean >= 0.0 && b.std >= 0.0) {
                return Err(Error::InvalidPolicy("non-finite or negative statistics".into()));
            }
            let mt = d.mt_at(b.temperature_c);
            if mt >= min_inter_hd {
                return Err(Error::InvalidPolicy(format!(
                    "MT {mt} at {} °C is not below the minimum inter-device HD {min_inter_hd}",
                    b.temperature_c
                )));
            }
        }
        Ok(MatchPolicy::Dynamic(d))
    }

    pub fn mt(&self, env: &Environment) -> u64 {
        match self {
            MatchPolicy::Static { mt } => *mt,
            MatchPolicy::Dynamic(d) => d.mt_at(env.temperature_c),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MatchPolicy::Static { .. } => "static",
            MatchPolicy::Dynamic(_) => "dynamic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthOutcome {
    pub accepted: bool,
    pub hd: u64,
    pub mt_used: u64,
    pub challenge_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DbStatus {
    Active,
    Retired,
}

/// The CRP database of one device.
#[derive(Debug, Clone, PartialEq)]
pub struct CrpDatabase {
    pub device_id: u64,
    pub sram_bytes: u64,
    pub dram_bytes: u64,
    /// Incremented by every reconfiguration.
    pub epoch: u32,
    pub status: DbStatus,
    pub policy: MatchPolicy,
    pub records: Vec<CrpRecord>,
}

impl CrpDatabase {
    pub fn new(device_id: u64, device: &DeviceInstance, policy: MatchPolicy, records: Vec<CrpRecord>) -> Self {
        CrpDatabase {
            device_id,
            sram_bytes: device.sram_bytes,
            dram_bytes: device.dram_bytes,
            epoch: 0,
            status: DbStatus::Active,
            policy,
            records,
        }
    }

    pub fn check_device(&self, device: &DeviceInstance) -> Result<()> {
        if device.sram_bytes != self.sram_bytes || device.dram_bytes != self.dram_bytes {
            return Err(Error::IncompatibleDevice(format!(
                "database geometry {} B SRAM / {} B DRAM, device {} B / {} B",
                self.sram_bytes, self.dram_bytes, device.sram_bytes, device.dram_bytes
            )));
        }
        Ok(())
    }

    pub fn record(&self, id: u64) -> Option<&CrpRecord> {
        self.records.iter().find(|r| r.challenge.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnrollOptions {
    /// Keep the golden start-up value in each record.
    pub store_golden_startup: bool,
}

impl Default for EnrollOptions {
    fn default() -> Self {
        EnrollOptions { store_golden_startup: true }
    }
}

pub fn enroll(device: &DeviceInstance, templates: &[Challenge], env: &Environment) -> Result<Vec<CrpRecord>> {
    enroll_with(device, templates, env, EnrollOptions::default())
}

pub fn enroll_with(
    device: &DeviceInstance,
    templates: &[Challenge],
    env: &Environment,
    opts: EnrollOptions,
) -> Result<Vec<CrpRecord>> {
    let mut seen = HashSet::new();
    for t in templates {
        if !seen.insert(t.id) {
            return Err(Error::DuplicateId(t.id));
        }
        t.validate(device)?;
    }
    // Golden responses come from the noise-free start-up value.
    let quiet = DeviceInstance {
        params: entropy::ModelParams { sram_sigma0: 0.0, ..device.params },
        ..device.clone()
    };
    templates
        .iter()
        .map(|t| {
            let golden = entropy::sram_golden(device, t.sram_region())?;
            let mut challenge = t.clone();
            challenge.ecc_data = Some(gen_err_corr_data(&golden, t.segment_bits)?);
            let golden_response = pipeline::generate_response(&quiet, &challenge, env)?;
            Ok(CrpRecord {
                challenge,
                golden_response,
                golden_startup: opts.store_golden_startup.then_some(golden),
                enrollment_env: *env,
            })
        })
        .collect()
}

/// Regenerates the response to `record` on `device` and applies `policy`.
pub fn authenticate(
    device: &DeviceInstance,
    record: &CrpRecord,
    env: &Environment,
    policy: &MatchPolicy,
) -> Result<AuthOutcome> {
    record.challenge.validate(device).map_err(|e| match e {
        Error::OutOfRange(m) => Error::IncompatibleDevice(m),
        other => other,
    })?;
    let response = pipeline::generate_response(device, &record.challenge, env)?;
    let hd = hamming_distance(&response.bitstream_r, &record.golden_response.bitstream_r)
        .map_err(|_| Error::IncompatibleDevice("response length differs from golden".into()))?;
    let mt_used = policy.mt(env);
    Ok(AuthOutcome { accepted: hd <= mt_used, hd, mt_used, challenge_id: record.challenge.id })
}

/// One authentication session: records are drawn uniformly without
/// replacement, so each is used at most once, and every attempt gets a fresh
/// noise seed.
pub struct AuthSession<'a> {
    db: &'a CrpDatabase,
    order: Vec<usize>,
    rng: ChaCha8Rng,
}

impl<'a> AuthSession<'a> {
    pub fn new(db: &'a CrpDatabase, session_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(session_seed);
        let mut order: Vec<usize> = (0..db.records.len()).collect();
        order.shuffle(&mut rng);
        order.reverse();
        AuthSession { db, order, rng }
    }

    pub fn remaining(&self) -> usize {
        self.order.len()
    }

    /// Authenticates against the next unused record, or `None` when the
    /// database is exhausted.
    pub fn next(&mut self, device: &DeviceInstance, temperature_c: f64) -> Option<Result<AuthOutcome>> {
        let idx = self.order.pop()?;
        let env = match Environment::new(temperature_c, self.rng.random()) {
            Ok(e) => e,
            Err(e) => return Some(Err(e)),
        };
        Some(
            self.db
                .check_device(device)
                .and_then(|_| authenticate(device, &self.db.records[idx], &env, &self.db.policy)),
        )
    }
}

/// Challenge parameters swept during characterization.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterizationGrid {
    /// Templates whose DRAM blocks are characterized; ids must be distinct.
    pub templates: Vec<Challenge>,
    /// Refresh pauses (seconds) for the per-block flip scan.
    pub pause_intervals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockFlips {
    pub addr_d: u64,
    pub pause_s: f64,
    pub flips: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntraSample {
    pub temperature_c: f64,
    pub challenge_id: u64,
    pub hd: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacterizationReport {
    pub block_flips: Vec<BlockFlips>,
    pub intra_samples: Vec<IntraSample>,
    /// One entry per characterized environment, in input order.
    pub intra: Vec<IntraStats>,
    /// Block addresses, most flips at the smallest pause first.
    pub recommended_blocks: Vec<u64>,
    /// Largest deviation from the golden responses over all environments.
    pub recommended_mt: u64,
}

impl CharacterizationReport {
    pub fn dynamic_policy(&self, c: f64, min_inter_hd: u64) -> Result<MatchPolicy> {
        MatchPolicy::dynamic(self.intra.clone(), c, min_inter_hd)
    }
}

/// Sweeps pauses and environments for one device. Golden responses are
/// taken at `envs[0]`, which is also where the flip scan runs.
pub fn characterize(
    device: &DeviceInstance,
    grid: &CharacterizationGrid,
    envs: &[Environment],
) -> Result<CharacterizationReport> {
    if grid.templates.is_empty() || grid.pause_intervals.is_empty() {
        return Err(Error::InvalidArgument("empty characterization grid".into()));
    }
    if envs.is_empty() {
        return Err(Error::InvalidArgument("no characterization environments".into()));
    }
    let reference = envs[0];
    let records = enroll(device, &grid.templates, &reference)?;

    let mut block_flips = Vec::new();
    for rec in &records {
        for &pause in &grid.pause_intervals {
            let mut ch = rec.challenge.clone();
            ch.refresh_pause_s = pause;
            let trace = pipeline::trace_response(device, &ch, &reference, pipeline::HashStage::Enabled)?;
            let flips = hamming_distance(&trace.written, &trace.response.bitstream_r)?;
            block_flips.push(BlockFlips { addr_d: ch.addr_d, pause_s: pause, flips });
        }
    }

    let mut intra_samples = Vec::new();
    let mut intra = Vec::new();
    for (ei, env) in envs.iter().enumerate() {
        let mut hds = Vec::with_capacity(records.len());
        for (ri, rec) in records.iter().enumerate() {
            let e = env.with_noise_seed(derive_seed(env.noise_seed, "characterize", (ei * records.len() + ri) as u64));
            let resp = pipeline::generate_response(device, &rec.challenge, &e)?;
            let hd = hamming_distance(&resp.bitstream_r, &rec.golden_response.bitstream_r)?;
            intra_samples.push(IntraSample { temperature_c: env.temperature_c, challenge_id: rec.challenge.id, hd });
            hds.push(hd);
        }
        let (mean, std) = mean_std(&hds);
        intra.push(IntraStats {
            temperature_c: env.temperature_c,
            mean,
            std,
            max: hds.iter().copied().max().unwrap_or(0),
        });
    }

    let min_pause = grid.pause_intervals.iter().copied().fold(f64::INFINITY, f64::min);
    let mut at_min: Vec<&BlockFlips> = block_flips.iter().filter(|b| b.pause_s == min_pause).collect();
    at_min.sort_by(|a, b| b.flips.cmp(&a.flips).then(a.addr_d.cmp(&b.addr_d)));
    let mut recommended_blocks: Vec<u64> = Vec::new();
    for b in at_min {
        if !recommended_blocks.contains(&b.addr_d) {
            recommended_blocks.push(b.addr_d);
        }
    }
    let recommended_mt = intra.iter().map(|s| s.max).max().unwrap_or(0);
    Ok(CharacterizationReport { block_flips, intra_samples, intra, recommended_blocks, recommended_mt })
}

/// Re-enrolls every template of `db` with the changed knob(s) applied.
/// Returns the new database; `db` itself is untouched.
pub fn reconfigure(
    device: &DeviceInstance,
    db: &CrpDatabase,
    new_addr_s: Option<u64>,
    new_refresh_pause_s: Option<f64>,
    env: &Environment,
) -> Result<CrpDatabase> {
    db.check_device(device)?;
    let first = db
        .records
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot reconfigure an empty database".into()))?;
    let addr_changed = new_addr_s.is_some_and(|a| a != first.challenge.addr_s);
    let pause_changed = new_refresh_pause_s.is_some_and(|p| p != first.challenge.refresh_pause_s);
    if !addr_changed && !pause_changed {
        return Err(Error::NoOpReconfiguration);
    }
    let templates: Vec<Challenge> = db
        .records
        .iter()
        .map(|r| {
            let mut t = r.challenge.clone();
            t.ecc_data = None;
            if let Some(a) = new_addr_s {
                t.addr_s = a;
            }
            if let Some(p) = new_refresh_pause_s {
                t.refresh_pause_s = p;
            }
            t
        })
        .collect();
    let keep_startup = db.records.iter().all(|r| r.golden_startup.is_some());
    let records = enroll_with(device, &templates, env, EnrollOptions { store_golden_startup: keep_startup })?;
    Ok(CrpDatabase {
        epoch: db.epoch + 1,
        status: DbStatus::Active,
        records,
        ..db.clone()
    })
}

/// Authenticator state for one device: the active database and every
/// retired one, frozen behind `Arc` for audit.
#[derive(Debug)]
pub struct Authenticator {
    active: CrpDatabase,
    retired: Vec<Arc<CrpDatabase>>,
}

impl Authenticator {
    pub fn new(active: CrpDatabase) -> Self {
        Authenticator { active, retired: Vec::new() }
    }

    pub fn active(&self) -> &CrpDatabase {
        &self.active
    }

    pub fn retired(&self) -> &[Arc<CrpDatabase>] {
        &self.retired
    }

    pub fn session(&self, seed: u64) -> AuthSession<'_> {
        AuthSession::new(&self.active, seed)
    }

    pub fn reconfigure(
        &mut self,
        device: &DeviceInstance,
        new_addr_s: Option<u64>,
        new_refresh_pause_s: Option<f64>,
        env: &Environment,
    ) -> Result<&CrpDatabase> {
        let fresh = reconfigure(device, &self.active, new_addr_s, new_refresh_pause_s, env)?;
        let mut old = std::mem::replace(&mut self.active, fresh);
        old.status = DbStatus::Retired;
        self.retired.push(Arc::new(old));
        Ok(&self.active)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub counterfeit_dram_seed: u64,
    pub policy_kind: &'static str,
    pub outcomes: Vec<AuthOutcome>,
    pub accepted: usize,
    pub total: usize,
}

impl ScenarioReport {
    /// A counterfeit-containing device got through at least once.
    pub fn at_risk(&self) -> bool {
        self.accepted > 0
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.accepted as f64 / self.total as f64
        }
    }
}

/// Swaps the genuine DRAM for one forged from `counterfeit_dram_seed` and
/// authenticates the hybrid against every record of `db`.
pub fn counterfeit_swap_scenario(
    genuine: &DeviceInstance,
    counterfeit_dram_seed: u64,
    db: &CrpDatabase,
    policy: &MatchPolicy,
    env: &Environment,
) -> Result<ScenarioReport> {
    db.check_device(genuine)?;
    let hybrid = genuine.with_dram_seed(counterfeit_dram_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(env.noise_seed, "counterfeit", counterfeit_dram_seed));
    let outcomes = db
        .records
        .iter()
        .map(|rec| authenticate(&hybrid, rec, &env.with_noise_seed(rng.random()), policy))
        .collect::<Result<Vec<_>>>()?;
    let accepted = outcomes.iter().filter(|o| o.accepted).count();
    Ok(ScenarioReport {
        counterfeit_dram_seed,
        policy_kind: policy.kind(),
        total: outcomes.len(),
        accepted,
        outcomes,
    })
}

/// Re-checks the correction-data round trip of every record.
pub fn audit(db: &CrpDatabase) -> Result<()> {
    for rec in &db.records {
        rec.check_consistency()?;
        if let (Some(golden), Some(ecc)) = (&rec.golden_startup, &rec.challenge.ecc_data) {
            let cv = ecc::corr_startup_val(golden, rec.challenge.segment_bits, ecc)?;
            if cv != ecc::segment_majority(golden, rec.challenge.segment_bits)? {
                return Err(Error::InvalidArgument(format!(
                    "challenge {} does not correct its own golden value",
                    rec.challenge.id
                )));
            }
        }
    }
    Ok(())
}
