// SPDX-License-Identifier: Apache-2.0

//! Subcommand implementations. Every command derives its devices and
//! templates from the master seed, so separate invocations agree.

use cpuf::analysis::{crp_count, dram_only_baseline, inter_distribution, tpr_fpr, uniqueness, CrpCount, HdDistribution, Truth};
use cpuf::authenticator::{
    characterize, counterfeit_swap_scenario, enroll_with, AuthSession, CharacterizationGrid, DbStatus, EnrollOptions,
    IntraStats,
};
use cpuf::campaign::{random_templates, SeedPlan, TemplateSpec};
use cpuf::pipeline::HashStage;
use cpuf::{age_device, reconfigure, AuthOutcome, Challenge, CrpDatabase, DeviceInstance, Environment, MatchPolicy};
use log::info;
use serde_json::json;

use crate::artifacts::Layout;
use crate::config::{Config, PolicyKind};
use crate::error::{CliError, CliResult};

/// Template set of the enrollment epoch.
const ENROLL_TEMPLATE_SET: u64 = 0;
/// Template set of the stand-alone report.
const REPORT_TEMPLATE_SET: u64 = 1;

pub struct Context {
    pub config: Config,
    pub layout: Layout,
    pub plan: SeedPlan,
}

impl Context {
    pub fn new(config: Config, layout: Layout) -> Self {
        let plan = SeedPlan::new(config.seed);
        let c = &config;
        if c.scale != 1.0 {
            info!(
                "scale {}: Size_D {} B -> {} B (effective scale {:.6}); HD thresholds scale linearly, \
                 match_threshold {} -> {}",
                c.scale,
                c.size_d,
                c.scaled_size_d(),
                c.effective_scale(),
                c.match_threshold,
                c.scaled_mt(c.match_threshold)
            );
        }
        Context { config, layout, plan }
    }

    /// Devices as forged, without any noise override.
    fn forged(&self) -> CliResult<Vec<DeviceInstance>> {
        (0..self.config.devices)
            .map(|i| Ok(cpuf::forge_device(self.plan.manufacturing(i), self.config.sram_bytes, self.config.dram_bytes)?))
            .collect()
    }

    /// Devices as seen by a verifier: with `noise = off` the SRAM power-up
    /// noise is zero.
    fn devices(&self) -> CliResult<Vec<DeviceInstance>> {
        let mut devs = self.forged()?;
        if !self.config.noise {
            for d in &mut devs {
                d.params.sram_sigma0 = 0.0;
            }
        }
        Ok(devs)
    }

    fn templates(&self, set: u64) -> CliResult<Vec<Challenge>> {
        let c = &self.config;
        let spec = TemplateSpec {
            size_s: c.size_s,
            segment_bits: c.segment_bits,
            wrapper: c.wrapper,
            refresh_pause_s: c.refresh_pause_s,
            ..TemplateSpec::new(c.challenges, c.scaled_size_d())
        };
        Ok(random_templates(self.plan.templates(set), &spec, c.sram_bytes, c.dram_bytes)?)
    }

    fn env(&self, temperature_c: f64, run: u64) -> CliResult<Environment> {
        Ok(Environment::new(temperature_c, self.plan.noise(run))?)
    }

    fn load_dbs(&self) -> CliResult<Vec<CrpDatabase>> {
        (0..self.config.devices).map(|i| self.layout.load_db(i)).collect()
    }

    /// Enrollment temperature first, then the remaining configured ones.
    fn characterization_temperatures(&self) -> Vec<f64> {
        let mut t = vec![self.config.enroll_temperature];
        for &x in &self.config.temperatures {
            if !t.contains(&x) {
                t.push(x);
            }
        }
        t
    }
}

pub fn forge(ctx: &Context) -> CliResult<serde_json::Value> {
    let devs = ctx.forged()?;
    let mut w = ctx.layout.csv_writer("devices.csv")?;
    w.write_record(["device", "manufacturing_seed", "dram_seed", "sram_bytes", "dram_bytes"])?;
    for (i, d) in devs.iter().enumerate() {
        w.write_record([
            i.to_string(),
            d.manufacturing_seed.to_string(),
            d.dram_seed.to_string(),
            d.sram_bytes.to_string(),
            d.dram_bytes.to_string(),
        ])?;
    }
    w.flush().map_err(CliError::io("writing devices.csv"))?;
    info!("forged {} devices", devs.len());
    Ok(json!({ "manufacturing_seeds": devs.iter().map(|d| d.manufacturing_seed).collect::<Vec<_>>() }))
}

pub fn enroll(ctx: &Context) -> CliResult<serde_json::Value> {
    forge(ctx)?;
    let devs = ctx.forged()?;
    let templates = ctx.templates(ENROLL_TEMPLATE_SET)?;
    let env = ctx.env(ctx.config.enroll_temperature, 0)?;
    let policy = MatchPolicy::fixed(ctx.config.scaled_mt(ctx.config.match_threshold));
    let opts = EnrollOptions { store_golden_startup: ctx.config.store_golden_startup };
    for (i, d) in devs.iter().enumerate() {
        let records = enroll_with(d, &templates, &env, opts)?;
        let db = CrpDatabase::new(i as u64, d, policy.clone(), records);
        let path = ctx.layout.db(i as u64);
        ctx.layout.save_db(&path, &db)?;
        info!("enrolled device {i}: {} CRPs -> {}", db.records.len(), path.display());
    }
    Ok(json!({ "template_seed": ctx.plan.templates(ENROLL_TEMPLATE_SET), "records_per_device": templates.len() }))
}

fn stats_row(device: u64, kind: &str, b: Option<&IntraStats>, mt: u64) -> Vec<String> {
    vec![
        device.to_string(),
        kind.to_string(),
        b.map(|b| b.temperature_c.to_string()).unwrap_or_default(),
        b.map(|b| format!("{:.6}", b.mean)).unwrap_or_default(),
        b.map(|b| format!("{:.6}", b.std)).unwrap_or_default(),
        b.map(|b| b.max.to_string()).unwrap_or_default(),
        mt.to_string(),
    ]
}

pub fn characterize_cmd(ctx: &Context) -> CliResult<serde_json::Value> {
    let devs = ctx.devices()?;
    let mut dbs = ctx.load_dbs()?;
    let temps = ctx.characterization_temperatures();
    let envs: Vec<Environment> = temps.iter().map(|&t| ctx.env(t, 100)).collect::<CliResult<_>>()?;

    let reports = devs
        .iter()
        .zip(&dbs)
        .map(|(d, db)| {
            db.check_device(d)?;
            let templates = db
                .records
                .iter()
                .map(|r| Challenge { ecc_data: None, ..r.challenge.clone() })
                .collect();
            let grid = CharacterizationGrid { templates, pause_intervals: ctx.config.pause_intervals.clone() };
            Ok(characterize(d, &grid, &envs)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let min_inter = inter_distribution(&devs, &dbs, &envs[..1])?.min().unwrap_or(0);
    let static_mt = reports.iter().map(|r| r.recommended_mt).max().unwrap_or(0);

    let mut flips = ctx.layout.csv_writer("characterization/block_flips.csv")?;
    flips.write_record(["device", "addr_d", "pause_s", "flips"])?;
    let mut intra = ctx.layout.csv_writer("characterization/intra.csv")?;
    intra.write_record(["device", "temperature_c", "challenge_id", "hd"])?;
    let mut pol = ctx.layout.csv_writer("characterization/policy.csv")?;
    pol.write_record(["device", "policy", "temperature_c", "mean", "std", "max", "mt"])?;

    for (i, (report, db)) in reports.iter().zip(dbs.iter_mut()).enumerate() {
        for b in &report.block_flips {
            flips.write_record([i.to_string(), b.addr_d.to_string(), b.pause_s.to_string(), b.flips.to_string()])?;
        }
        for s in &report.intra_samples {
            intra.write_record([i.to_string(), s.temperature_c.to_string(), s.challenge_id.to_string(), s.hd.to_string()])?;
        }
        db.policy = match ctx.config.policy {
            PolicyKind::Static => MatchPolicy::fixed(static_mt),
            PolicyKind::Dynamic => report.dynamic_policy(ctx.config.dynamic_c, min_inter)?,
        };
        match &db.policy {
            MatchPolicy::Static { mt } => pol.write_record(stats_row(i as u64, "static", None, *mt))?,
            MatchPolicy::Dynamic(d) => {
                for b in &d.buckets {
                    pol.write_record(stats_row(i as u64, "dynamic", Some(b), d.mt_at(b.temperature_c)))?;
                }
            }
        }
        ctx.layout.save_db(&ctx.layout.db(i as u64), db)?;
    }
    for w in [&mut flips, &mut intra, &mut pol] {
        w.flush().map_err(CliError::io("writing characterization CSVs"))?;
    }
    info!(
        "characterized {} devices at {:?} °C: static MT {static_mt}, min inter HD {min_inter}, policy {}",
        devs.len(),
        temps,
        match ctx.config.policy {
            PolicyKind::Static => "static",
            PolicyKind::Dynamic => "dynamic",
        }
    );
    Ok(json!({ "noise_seed": ctx.plan.noise(100), "static_mt": static_mt, "min_inter_hd": min_inter }))
}

fn dist_from(rows: &[(usize, usize, f64, AuthOutcome)], response_bits: u64) -> HdDistribution {
    HdDistribution::new(
        rows.iter()
            .map(|(dev, db, t, o)| cpuf::analysis::Comparison {
                device: *db as u64,
                other: (dev != db).then_some(*dev as u64),
                challenge_id: o.challenge_id,
                temperature_c: *t,
                hd: o.hd,
            })
            .collect(),
        response_bits,
    )
}

pub fn auth(ctx: &Context, verify: bool) -> CliResult<serde_json::Value> {
    let devs = ctx.devices()?;
    let dbs = ctx.load_dbs()?;
    let temps = &ctx.config.temperatures;
    let n = devs.len();

    // (device answering, database, temperature, outcome)
    let mut rows = Vec::new();
    for (k, db) in dbs.iter().enumerate() {
        for (j, d) in devs.iter().enumerate() {
            for (ti, &t) in temps.iter().enumerate() {
                let mut session = AuthSession::new(db, ctx.plan.session(((k * n + j) * temps.len() + ti) as u64));
                while let Some(o) = session.next(d, t) {
                    rows.push((j, k, t, o?));
                }
            }
        }
    }

    let mut w = ctx.layout.csv_writer("auth/auth.csv")?;
    w.write_record(["kind", "device", "database", "challenge_id", "temperature_c", "hd", "mt", "accepted"])?;
    for (j, k, t, o) in &rows {
        w.write_record([
            if j == k { "genuine" } else { "impostor" }.to_string(),
            j.to_string(),
            k.to_string(),
            o.challenge_id.to_string(),
            t.to_string(),
            o.hd.to_string(),
            o.mt_used.to_string(),
            o.accepted.to_string(),
        ])?;
    }
    w.flush().map_err(CliError::io("writing auth.csv"))?;

    let outcomes: Vec<(Truth, AuthOutcome)> = rows
        .iter()
        .map(|(j, k, _, o)| (if j == k { Truth::Genuine } else { Truth::Impostor }, *o))
        .collect();
    let (tpr, fpr) = tpr_fpr(&outcomes)?;
    let bits = ctx.config.scaled_size_d() * 8;
    let (genuine, impostor): (Vec<_>, Vec<_>) = rows.iter().copied().partition(|(j, k, _, _)| j == k);
    let intra = dist_from(&genuine, bits);
    let inter = dist_from(&impostor, bits);
    intra.write_histogram_csv(std::fs::File::create(ctx.layout.create("auth/intra_histogram.csv")?).map_err(CliError::io("auth/intra_histogram.csv"))?)
        .map_err(CliError::io("writing intra histogram"))?;
    inter.write_histogram_csv(std::fs::File::create(ctx.layout.create("auth/inter_histogram.csv")?).map_err(CliError::io("auth/inter_histogram.csv"))?)
        .map_err(CliError::io("writing inter histogram"))?;

    let max_intra = intra.max().unwrap_or(0);
    let min_inter = inter.min().unwrap_or(0);
    let mut s = ctx.layout.csv_writer("auth/summary.csv")?;
    s.write_record(["metric", "value"])?;
    for (k, v) in [
        ("genuine_attempts", genuine.len().to_string()),
        ("impostor_attempts", impostor.len().to_string()),
        ("tpr", format!("{tpr:.6}")),
        ("fpr", format!("{fpr:.6}")),
        ("max_intra_hd", max_intra.to_string()),
        ("min_inter_hd", min_inter.to_string()),
        ("response_bits", bits.to_string()),
    ] {
        s.write_record([k, v.as_str()])?;
    }
    s.flush().map_err(CliError::io("writing auth summary"))?;

    println!("TPR {:.2}%  FPR {:.2}%  max intra HD {max_intra}  min inter HD {min_inter}", tpr * 100.0, fpr * 100.0);
    if verify && (tpr < 1.0 || fpr > 0.0) {
        return Err(CliError::Assertion(format!("TPR {tpr:.4}, FPR {fpr:.4} (expected 1 and 0)")));
    }
    Ok(json!({ "tpr": tpr, "fpr": fpr, "max_intra_hd": max_intra, "min_inter_hd": min_inter }))
}

pub fn reconfigure_cmd(ctx: &Context, addr_s: Option<u64>, pause: Option<f64>) -> CliResult<serde_json::Value> {
    if addr_s.is_none() && pause.is_none() {
        return Err(CliError::Config("reconfigure needs --addr-s and/or --refresh-pause".into()));
    }
    if let Some(a) = addr_s {
        if a % ctx.config.size_s != 0 || a + ctx.config.size_s > ctx.config.sram_bytes {
            return Err(CliError::Config(format!(
                "--addr-s {a} must be a multiple of size_s {} inside the SRAM",
                ctx.config.size_s
            )));
        }
    }
    let devs = ctx.forged()?;
    let env = ctx.env(ctx.config.enroll_temperature, 0)?;
    let mut epochs = Vec::new();
    for (i, d) in devs.iter().enumerate() {
        let old = ctx.layout.load_db(i as u64)?;
        let mut fresh = reconfigure(d, &old, addr_s, pause, &env)?;
        fresh.policy = old.policy.clone();
        let retired = CrpDatabase { status: DbStatus::Retired, ..old };
        ctx.layout.save_db(&ctx.layout.retired_db(i as u64, retired.epoch), &retired)?;
        ctx.layout.save_db(&ctx.layout.db(i as u64), &fresh)?;
        info!("device {i}: epoch {} retired, epoch {} active", retired.epoch, fresh.epoch);
        epochs.push(fresh.epoch);
    }
    Ok(json!({ "addr_s": addr_s, "refresh_pause_s": pause, "epochs": epochs }))
}

pub fn attack(ctx: &Context, device: u64, verify: bool) -> CliResult<serde_json::Value> {
    if device >= ctx.config.devices {
        return Err(CliError::Config(format!("--device {device} but only {} devices", ctx.config.devices)));
    }
    let genuine = &ctx.devices()?[device as usize];
    let db = ctx.layout.load_db(device)?;
    let env = ctx.env(ctx.config.enroll_temperature, 200)?;

    let mut policies = vec![("database", db.policy.clone())];
    // The static equivalent of a dynamic policy: the worst intra HD seen
    // anywhere during characterization.
    if let MatchPolicy::Dynamic(d) = &db.policy {
        policies.push(("static", MatchPolicy::fixed(d.buckets.iter().map(|b| b.max).max().unwrap_or(0))));
    }

    let mut w = ctx.layout.csv_writer("attack/counterfeit.csv")?;
    w.write_record(["counterfeit", "counterfeit_dram_seed", "policy", "kind", "challenge_id", "hd", "mt", "accepted"])?;
    let mut summary = serde_json::Map::new();
    let mut db_accepted = 0;
    for (name, policy) in &policies {
        let mut accepted = 0;
        let mut total = 0;
        for k in 0..ctx.config.counterfeits {
            let r = counterfeit_swap_scenario(genuine, ctx.plan.counterfeit(k), &db, policy, &env)?;
            for o in &r.outcomes {
                w.write_record([
                    k.to_string(),
                    r.counterfeit_dram_seed.to_string(),
                    name.to_string(),
                    r.policy_kind.to_string(),
                    o.challenge_id.to_string(),
                    o.hd.to_string(),
                    o.mt_used.to_string(),
                    o.accepted.to_string(),
                ])?;
            }
            accepted += r.accepted;
            total += r.total;
        }
        println!("{name} policy ({}): {accepted}/{total} counterfeit attempts accepted", policy.kind());
        if *name == "database" {
            db_accepted = accepted;
        }
        summary.insert(name.to_string(), json!({ "kind": policy.kind(), "accepted": accepted, "total": total }));
    }
    w.flush().map_err(CliError::io("writing counterfeit.csv"))?;
    if verify && db_accepted > 0 {
        return Err(CliError::Assertion(format!("{db_accepted} counterfeit attempts accepted by the database policy")));
    }
    Ok(serde_json::Value::Object(summary))
}

fn write_dist(ctx: &Context, rel: &str, kind: &str, d: &HdDistribution) -> CliResult<()> {
    let f = std::fs::File::create(ctx.layout.create(rel)?).map_err(CliError::io(rel.to_string()))?;
    d.write_csv(kind, f).map_err(CliError::io(format!("writing {rel}")))
}

pub fn report(ctx: &Context) -> CliResult<serde_json::Value> {
    let c = &ctx.config;
    let devs = ctx.devices()?;
    let templates = ctx.templates(REPORT_TEMPLATE_SET)?;
    let env = ctx.env(c.enroll_temperature, 300)?;
    let bits = (c.scaled_size_d() * 8) as f64;

    let hash = uniqueness(&devs, &templates, &env, HashStage::Enabled)?;
    let no_hash = uniqueness(&devs, &templates, &env, HashStage::Bypassed)?;
    let dram_only = dram_only_baseline(&devs, &templates, &env)?;
    write_dist(ctx, "report/uniqueness_hash.csv", "inter-hash", &hash)?;
    write_dist(ctx, "report/uniqueness_no_hash.csv", "inter-no-hash", &no_hash)?;
    write_dist(ctx, "report/dram_only.csv", "inter-dram-only", &dram_only)?;

    // Aging: enroll fresh, age, re-authenticate at the enrollment temperature.
    let mut aging = ctx.layout.csv_writer("report/aging.csv")?;
    aging.write_record(["device", "months", "challenge_id", "hd", "hd_fraction"])?;
    let mut max_aging_hd = 0;
    for (i, d) in devs.iter().enumerate() {
        let records = cpuf::enroll(d, &templates, &env)?;
        let aged = age_device(d, c.aging_months)?;
        for rec in &records {
            let e = env.with_noise_seed(cpuf::prf::derive_seed(env.noise_seed, "aging", (i * records.len()) as u64 + rec.challenge.id));
            let o = cpuf::authenticate(&aged, rec, &e, &MatchPolicy::fixed(0))?;
            max_aging_hd = max_aging_hd.max(o.hd);
            aging.write_record([
                i.to_string(),
                c.aging_months.to_string(),
                rec.challenge.id.to_string(),
                o.hd.to_string(),
                format!("{:.6}", o.hd as f64 / bits),
            ])?;
        }
    }
    aging.flush().map_err(CliError::io("writing aging.csv"))?;

    let mut crp = ctx.layout.csv_writer("report/crp_count.csv")?;
    crp.write_record([
        "sram_bytes", "size_s", "dram_bytes", "size_d", "wrappers", "pause_intervals", "sram_crps", "dram_crps",
        "alternative", "combined", "log2_alternative", "log2_combined",
    ])?;
    let n_pauses = c.pause_intervals.len() as u64;
    let mut sizes = vec![c.size_d];
    if c.scaled_size_d() != c.size_d {
        sizes.push(c.scaled_size_d());
    }
    for size_d in sizes {
        let n = crp_count(c.sram_bytes, c.size_s, c.dram_bytes, size_d, 3, n_pauses)?;
        crp.write_record([
            c.sram_bytes.to_string(),
            c.size_s.to_string(),
            c.dram_bytes.to_string(),
            size_d.to_string(),
            "3".to_string(),
            n_pauses.to_string(),
            n.sram_crps.to_string(),
            n.dram_crps.to_string(),
            n.alternative.to_string(),
            n.combined.to_string(),
            CrpCount::log2_floor(&n.alternative).to_string(),
            CrpCount::log2_floor(&n.combined).to_string(),
        ])?;
    }
    crp.flush().map_err(CliError::io("writing crp_count.csv"))?;

    let min_nh = no_hash.min().unwrap_or(0);
    let max_do = dram_only.max().unwrap_or(0);
    let mut s = ctx.layout.csv_writer("report/summary.csv")?;
    s.write_record(["metric", "value"])?;
    for (k, v) in [
        ("response_bits", format!("{bits}")),
        ("hash_min_inter_fraction", format!("{:.6}", hash.min().unwrap_or(0) as f64 / bits)),
        ("hash_max_inter_fraction", format!("{:.6}", hash.max().unwrap_or(0) as f64 / bits)),
        ("no_hash_min_inter_fraction", format!("{:.6}", min_nh as f64 / bits)),
        ("dram_only_max_inter_hd", max_do.to_string()),
        ("no_hash_over_dram_only", format!("{:.3}", min_nh as f64 / max_do.max(1) as f64)),
        ("aging_months", c.aging_months.to_string()),
        ("aging_max_intra_hd", max_aging_hd.to_string()),
    ] {
        s.write_record([k, v.as_str()])?;
    }
    s.flush().map_err(CliError::io("writing report summary"))?;
    println!(
        "uniqueness (hash) {:.4}..{:.4}, no-hash min {:.4}, DRAM-only max {max_do}, aging max HD {max_aging_hd}",
        hash.min().unwrap_or(0) as f64 / bits,
        hash.max().unwrap_or(0) as f64 / bits,
        min_nh as f64 / bits
    );
    Ok(json!({ "template_seed": ctx.plan.templates(REPORT_TEMPLATE_SET), "noise_seed": ctx.plan.noise(300) }))
}
