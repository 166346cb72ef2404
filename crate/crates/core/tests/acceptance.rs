// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cpuf::analysis::{
    crp_count, dram_only_baseline, inter_distribution, intra_inter_report, tpr_fpr, uniqueness,
    CrpCount, Truth,
};
use cpuf::authenticator::{
    authenticate, characterize, counterfeit_swap_scenario, enroll, CharacterizationGrid, CrpDatabase, CrpRecord,
    MatchPolicy, DEFAULT_DYNAMIC_C,
};
use cpuf::campaign::{random_templates, SeedPlan, TemplateSpec};
use cpuf::codec;
use cpuf::ecc::{corr_startup_val, gen_err_corr_data, segment_majority};
use cpuf::entropy::{age_device, forge_device, Bits, DeviceInstance, Environment, DEFAULT_DRAM_BYTES, DEFAULT_SRAM_BYTES};
use cpuf::pipeline::{trace_response, Challenge, HashStage, Response, WrapperPattern, DEFAULT_SIZE_D};

const SCALED_SIZE_D: u64 = 16 * 1024;
const SCALE: f64 = SCALED_SIZE_D as f64 / DEFAULT_SIZE_D as f64;
const MASTER_SEED: u64 = 0x00C0_FFEE;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn devices(plan: &SeedPlan, n: u64) -> Vec<DeviceInstance> {
    (0..n)
        .map(|i| forge_device(plan.manufacturing(i), DEFAULT_SRAM_BYTES, DEFAULT_DRAM_BYTES).unwrap())
        .collect()
}

fn templates(plan: &SeedPlan, set: u64, count: usize, size_d: u64) -> Vec<Challenge> {
    random_templates(plan.templates(set), &TemplateSpec::new(count, size_d), DEFAULT_SRAM_BYTES, DEFAULT_DRAM_BYTES)
        .unwrap()
}

fn env(t: f64, seed: u64) -> Environment {
    Environment::new(t, seed).unwrap()
}

fn enroll_all(devs: &[DeviceInstance], t: &[Challenge], e: &Environment) -> Vec<CrpDatabase> {
    devs.iter()
        .map(|d| CrpDatabase::new(d.manufacturing_seed, d, MatchPolicy::fixed(0), enroll(d, t, e).unwrap()))
        .collect()
}

// 1. Segment-majority correction is exact at N = 8.
fn ecc_exactness() -> Outcome {
    let start = Instant::now();
    // All error patterns of weight <= 3 within one 8-bit segment.
    let patterns: Vec<u8> = (0..=255u8).filter(|p| p.count_ones() <= 3).collect();
    assert_eq!(patterns.len(), 93);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = 0u64;
    let mut checked = 0u64;
    for _ in 0..10_000 {
        let mut golden = [0u8; 32];
        rng.fill_bytes(&mut golden);
        let golden_bits = Bits::from_slice(&golden);
        let ecc = gen_err_corr_data(&golden_bits, 8).unwrap();
        let expected = segment_majority(&golden_bits, 8).unwrap();
        // Rotation k puts pattern (k + s) mod 93 on segment s, so every
        // segment sees every pattern while all segments carry errors.
        for k in 0..patterns.len() {
            let noisy: Vec<u8> =
                golden.iter().enumerate().map(|(s, g)| g ^ patterns[(k + s) % patterns.len()]).collect();
            let cv = corr_startup_val(&Bits::from_slice(&noisy), 8, &ecc).unwrap();
            checked += 1;
            if cv != expected {
                failures += 1;
            }
        }
    }
    // Exhaustive single-segment enumeration of the weight-4 tie.
    let mut tie_ok = true;
    for g in 0..=255u8 {
        let rep = g.count_ones() >= 4;
        let ecc = gen_err_corr_data(&Bits::from_slice(&[g]), 8).unwrap();
        for e in 0..=255u8 {
            let cv = corr_startup_val(&Bits::from_slice(&[g ^ e]), 8, &ecc).unwrap();
            let ok = cv.bits()[0] == rep;
            let w = e.count_ones();
            let expect_ok = w <= 3 || (w == 4 && rep);
            if ok != expect_ok {
                tie_ok = false;
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        failures == 0 && tie_ok && elapsed < Duration::from_secs(60),
        format!(
            "{checked} corrections, {failures} mismatches; weight-4 tie asymmetry {}; {:.1}s",
            if tie_ok { "confirmed" } else { "VIOLATED" },
            elapsed.as_secs_f64()
        ),
    )
}

// 2. End-to-end determinism.
fn determinism() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for case in 0..100u64 {
        let d = forge_device(rng.random(), DEFAULT_SRAM_BYTES, DEFAULT_DRAM_BYTES).unwrap();
        let mut spec = TemplateSpec::new(1, SCALED_SIZE_D);
        spec.wrapper = WrapperPattern::ALL[case as usize % 3];
        let t = random_templates(rng.random(), &spec, DEFAULT_SRAM_BYTES, DEFAULT_DRAM_BYTES).unwrap();
        let rec = &enroll(&d, &t, &env(20.0, 0)).unwrap()[0];
        let e = env(rng.random_range(0.0..=100.0), rng.random());
        let a = trace_response(&d, &rec.challenge, &e, HashStage::Enabled).unwrap().response;
        let b = trace_response(&d, &rec.challenge, &e, HashStage::Enabled).unwrap().response;
        if a != b {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        mismatches == 0 && elapsed < Duration::from_secs(60),
        format!("100 triples, {mismatches} non-identical; {:.1}s", elapsed.as_secs_f64()),
    )
}

// 3. Uniqueness with the hash stage.
fn uniqueness_with_hash() -> Outcome {
    let plan = SeedPlan::new(MASTER_SEED);
    let devs = devices(&plan, 5);
    let t = templates(&plan, 3, 10, SCALED_SIZE_D);
    let dist = uniqueness(&devs, &t, &env(20.0, plan.noise(3)), HashStage::Enabled).unwrap();
    let bits = (SCALED_SIZE_D * 8) as f64;
    let (lo, hi) = (dist.min().unwrap(), dist.max().unwrap());
    let ok = dist.hds().all(|hd| (hd as f64 - bits / 2.0).abs() <= 0.02 * bits);
    check(
        ok && dist.comparisons.len() == 100,
        format!(
            "{} comparisons at {} bits: HD range [{lo}, {hi}] = [{:.4}, {:.4}] of bits (need 0.50 ± 0.02)",
            dist.comparisons.len(),
            bits,
            lo as f64 / bits,
            hi as f64 / bits
        ),
    )
}

fn uniqueness_with_hash_full_scale() -> Outcome {
    let start = Instant::now();
    let plan = SeedPlan::new(MASTER_SEED);
    let devs = devices(&plan, 5);
    let t = templates(&plan, 30, 10, DEFAULT_SIZE_D);
    let dist = uniqueness(&devs, &t, &env(20.0, plan.noise(30)), HashStage::Enabled).unwrap();
    let ideal = (DEFAULT_SIZE_D * 8 / 2) as f64;
    let min = dist.min().unwrap() as f64;
    check(
        (min - ideal).abs() <= 0.02 * ideal,
        format!(
            "min inter HD {min} vs ideal {ideal} ({:+.3}%); {:.1}s",
            100.0 * (min - ideal) / ideal,
            start.elapsed().as_secs_f64()
        ),
    )
}

// 4 + 5. Uniqueness without hash, and the DRAM-only gap.
fn no_hash_and_dram_only() -> (Outcome, Outcome) {
    let plan = SeedPlan::new(MASTER_SEED);
    let devs = devices(&plan, 5);
    let t = templates(&plan, 4, 10, SCALED_SIZE_D);
    let e = env(20.0, plan.noise(4));
    let bits = (SCALED_SIZE_D * 8) as f64;
    let no_hash = uniqueness(&devs, &t, &e, HashStage::Bypassed).unwrap();
    let min_nh = no_hash.min().unwrap();
    let frac = min_nh as f64 / bits;
    let c4 = check(
        frac > 0.10,
        format!(
            "min inter HD {min_nh} = {frac:.4} of {bits} bits (target 0.148, must exceed 0.10){}",
            if frac > 0.148 { "" } else { "; below the 0.148 full-scale analog" }
        ),
    );
    let dram_only = dram_only_baseline(&devs, &t, &e).unwrap();
    let max_do = dram_only.max().unwrap();
    let ratio = min_nh as f64 / max_do.max(1) as f64;
    let c5 = check(
        max_do as f64 * 100.0 <= min_nh as f64,
        format!("DRAM-only max inter HD {max_do}, C-PUF(no-hash) min {min_nh}, ratio {ratio:.0}x (need >= 100x)"),
    );
    (c4, c5)
}

// 6. Temperature robustness with a static MT from characterization.
fn temperature_robustness() -> Outcome {
    let start = Instant::now();
    let plan = SeedPlan::new(MASTER_SEED);
    let devs = devices(&plan, 5);
    let t = templates(&plan, 6, 20, SCALED_SIZE_D);
    let enroll_env = env(20.0, plan.noise(60));
    let dbs = enroll_all(&devs, &t, &enroll_env);

    let char_envs: Vec<Environment> = [20.0, 40.0, 60.0].iter().map(|&c| env(c, plan.noise(61))).collect();
    let grid = CharacterizationGrid { templates: t.clone(), pause_intervals: vec![40.0] };
    let static_mt = devs
        .iter()
        .map(|d| characterize(d, &grid, &char_envs).unwrap().recommended_mt)
        .max()
        .unwrap();
    let policy = MatchPolicy::fixed(static_mt);

    let auth_envs: Vec<Environment> = [20.0, 40.0, 60.0].iter().map(|&c| env(c, plan.noise(62))).collect();
    let report = intra_inter_report(&devs, &dbs, &auth_envs).unwrap();
    let mut outcomes = Vec::new();
    for c in &report.intra.comparisons {
        outcomes.push((Truth::Genuine, apply(&policy, c.hd)));
    }
    for c in &report.inter.comparisons {
        outcomes.push((Truth::Impostor, apply(&policy, c.hd)));
    }
    let (tpr, fpr) = tpr_fpr(&outcomes).unwrap();
    let (max_intra, min_inter) = (report.max_intra(), report.min_inter());
    let gap = report.gap();
    let elapsed = start.elapsed();
    check(
        tpr == 1.0 && fpr == 0.0 && max_intra < min_inter && gap >= 10 * max_intra as i64 && elapsed.as_secs() < 600,
        format!(
            "static MT {static_mt}; TPR {:.1}% FPR {:.1}% over {} genuine / {} impostor; max intra {max_intra}, \
             min inter {min_inter}, gap {gap} ({:.1}x max intra); {:.1}s",
            tpr * 100.0,
            fpr * 100.0,
            report.intra.comparisons.len(),
            report.inter.comparisons.len(),
            gap as f64 / max_intra.max(1) as f64,
            elapsed.as_secs_f64()
        ),
    )
}

fn apply(policy: &MatchPolicy, hd: u64) -> cpuf::AuthOutcome {
    let mt = match policy {
        MatchPolicy::Static { mt } => *mt,
        MatchPolicy::Dynamic(_) => unreachable!(),
    };
    cpuf::AuthOutcome { accepted: hd <= mt, hd, mt_used: mt, challenge_id: 0 }
}

// 7. Aging robustness.
fn aging_robustness() -> Outcome {
    let plan = SeedPlan::new(MASTER_SEED);
    let devs = devices(&plan, 5);
    let t = templates(&plan, 7, 10, SCALED_SIZE_D);
    let e = env(20.0, plan.noise(70));
    let dbs = enroll_all(&devs, &t, &e);
    let mt = (7.0 * SCALE).ceil() as u64 + 3;
    let policy = MatchPolicy::fixed(mt);
    let aged = age_device(&devs[0], 12.0).unwrap();
    let mut intra = Vec::new();
    let mut accepted = 0;
    for (k, rec) in dbs[0].records.iter().enumerate() {
        let o = authenticate(&aged, rec, &env(20.0, plan.noise(700 + k as u64)), &policy).unwrap();
        intra.push(o.hd);
        accepted += o.accepted as usize;
    }
    let bits = (SCALED_SIZE_D * 8) as f64;
    let mut aged_set = devs.clone();
    aged_set[0] = aged;
    let inter = inter_distribution(&aged_set, &dbs, &[env(20.0, plan.noise(71))]).unwrap();
    let min_inter = inter.min().unwrap();
    let max_intra = *intra.iter().max().unwrap();
    check(
        max_intra <= mt && accepted == intra.len() && min_inter as f64 > 0.45 * bits,
        format!(
            "intra HDs {intra:?} (MT {mt}), TPR {}/{}; min inter HD {min_inter} = {:.3} of bits (need > 0.45)",
            accepted,
            intra.len(),
            min_inter as f64 / bits
        ),
    )
}

// 8. CRP calculator.
fn crp_calculator() -> Outcome {
    let c = crp_count(2 << 20, 32, 1 << 30, 128 << 10, 3, 3).unwrap();
    let ok = c.sram_crps == BigUint::from(65_536u32)
        && c.dram_crps == BigUint::from(73_728u32)
        && CrpCount::log2_floor(&c.alternative) == 17
        && CrpCount::log2_floor(&c.combined) == 32;
    check(
        ok,
        format!(
            "A = {}, B = {}, A+B = {} (2^{}), AxB = {} (2^{})",
            c.sram_crps,
            c.dram_crps,
            c.alternative,
            CrpCount::log2_floor(&c.alternative),
            c.combined,
            CrpCount::log2_floor(&c.combined)
        ),
    )
}

// 9. Counterfeit DIMM swap.
fn counterfeit_swap() -> Outcome {
    let plan = SeedPlan::new(MASTER_SEED);
    let devs = devices(&plan, 5);
    let t = templates(&plan, 9, 20, SCALED_SIZE_D);
    let e = env(20.0, plan.noise(90));
    let dbs = enroll_all(&devs, &t, &e);
    let genuine = &devs[0];

    let char_envs: Vec<Environment> = [20.0, 40.0, 60.0].iter().map(|&c| env(c, plan.noise(91))).collect();
    let grid = CharacterizationGrid { templates: t.clone(), pause_intervals: vec![40.0] };
    let report = characterize(genuine, &grid, &char_envs).unwrap();
    let min_inter = inter_distribution(&devs, &dbs, &char_envs[..1]).unwrap().min().unwrap();
    let dynamic = report.dynamic_policy(DEFAULT_DYNAMIC_C, min_inter).unwrap();
    let static_policy = MatchPolicy::fixed(report.recommended_mt);

    let mut dyn_accepted = 0;
    let mut static_accepted = 0;
    let mut total = 0;
    for k in 0..5 {
        let seed = plan.counterfeit(k);
        let d = counterfeit_swap_scenario(genuine, seed, &dbs[0], &dynamic, &e).unwrap();
        let s = counterfeit_swap_scenario(genuine, seed, &dbs[0], &static_policy, &e).unwrap();
        dyn_accepted += d.accepted;
        static_accepted += s.accepted;
        total += d.total;
    }
    check(
        dyn_accepted == 0 && static_accepted > 0,
        format!(
            "5 counterfeit DIMMs x {} challenges: dynamic MT@20C {} accepted {dyn_accepted}/{total}; \
             static MT {} accepted {static_accepted}/{total} (risk reproduced: {})",
            t.len(),
            dynamic.mt(&e),
            report.recommended_mt,
            static_accepted > 0
        ),
    )
}

// 10. Zero decay passes HV through.
fn zero_decay_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut bad = 0;
    for _ in 0..100 {
        let d = forge_device(rng.random(), DEFAULT_SRAM_BYTES, DEFAULT_DRAM_BYTES).unwrap();
        let mut spec = TemplateSpec::new(1, 4096);
        spec.refresh_pause_s = 0.0;
        let t = random_templates(rng.random(), &spec, DEFAULT_SRAM_BYTES, DEFAULT_DRAM_BYTES).unwrap();
        let rec = &enroll(&d, &t, &env(20.0, 0)).unwrap()[0];
        let tr = trace_response(&d, &rec.challenge, &env(rng.random_range(0.0..=100.0), rng.random()), HashStage::Enabled)
            .unwrap();
        if tr.response.bitstream_r != tr.written {
            bad += 1;
        }
    }
    check(bad == 0, format!("100 cases, {bad} with bitstream_r != HV"))
}

// 11. Serialization round trip.
fn random_record(rng: &mut ChaCha8Rng) -> CrpRecord {
    let size_s = 8 * rng.random_range(1..=8u64);
    let size_d = 32 * rng.random_range(1..=16usize);
    let mut golden = vec![0u8; size_s as usize];
    rng.fill_bytes(&mut golden);
    let golden = Bits::from_slice(&golden);
    let mut bitstream_c = vec![0u8; size_d];
    rng.fill_bytes(&mut bitstream_c);
    let mut bitstream_r = vec![0u8; size_d];
    rng.fill_bytes(&mut bitstream_r);
    let id = rng.random();
    let challenge = Challenge {
        id,
        addr_s: rng.random(),
        size_s,
        segment_bits: 8,
        ecc_data: Some(gen_err_corr_data(&golden, 8).unwrap()),
        bitstream_c,
        addr_d: rng.random(),
        wrapper: WrapperPattern::ALL[rng.random_range(0..3)],
        refresh_pause_s: rng.random_range(0.0..120.0),
    };
    CrpRecord {
        challenge,
        golden_response: Response { id, bitstream_r },
        golden_startup: rng.random_bool(0.8).then_some(golden),
        enrollment_env: env(rng.random_range(0.0..=100.0), rng.random()),
    }
}

fn serialization_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let records: Vec<CrpRecord> = (0..1000).map(|_| random_record(&mut rng)).collect();
    let mut bad = 0;
    for r in &records {
        let rec_bytes = codec::encode_record(r);
        let back = codec::decode_record(&rec_bytes).unwrap();
        let ch = codec::encode_challenge(&r.challenge);
        let resp = codec::encode_response(&r.golden_response);
        if back != *r
            || codec::encode_record(&back) != rec_bytes
            || codec::encode_challenge(&codec::decode_challenge(&ch).unwrap()) != ch
            || codec::encode_response(&codec::decode_response(&resp).unwrap()) != resp
        {
            bad += 1;
        }
    }
    let dev = forge_device(1, DEFAULT_SRAM_BYTES, DEFAULT_DRAM_BYTES).unwrap();
    let policy = MatchPolicy::dynamic(
        vec![cpuf::authenticator::IntraStats { temperature_c: 20.0, mean: 1.5, std: 0.25, max: 3 }],
        4.0,
        10_000,
    )
    .unwrap();
    let db = CrpDatabase::new(7, &dev, policy, records);
    let bytes = codec::encode_database(&db);
    let back = codec::decode_database(&bytes).unwrap();
    let db_ok = back == db && codec::encode_database(&back) == bytes;
    check(
        bad == 0 && db_ok,
        format!("1000 records, {bad} not byte-identical; database of {} bytes identical: {db_ok}", bytes.len()),
    )
}

fn main() {
    // Listing mode has nothing to enumerate.
    if std::env::args().any(|a| a == "--list") {
        return;
    }

    let (c4, c5) = no_hash_and_dram_only();
    let results: Vec<(&str, Outcome)> = vec![
        ("1  ECC exactness", ecc_exactness()),
        ("2  pipeline determinism", determinism()),
        ("3  uniqueness with hash (16 KiB)", uniqueness_with_hash()),
        ("3b uniqueness with hash (128 KiB)", uniqueness_with_hash_full_scale()),
        ("4  uniqueness without hash", c4),
        ("5  DRAM-only gap", c5),
        ("6  temperature robustness", temperature_robustness()),
        ("7  aging robustness", aging_robustness()),
        ("8  CRP calculator", crp_calculator()),
        ("9  counterfeit swap", counterfeit_swap()),
        ("10 zero-decay identity", zero_decay_identity()),
        ("11 serialization round trip", serialization_round_trip()),
    ];

    let mut failed = 0;
    for (name, o) in &results {
        println!("[{}] #{name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
