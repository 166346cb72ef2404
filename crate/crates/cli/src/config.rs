// SPDX-License-Identifier: Apache-2.0

//! Flat `key = value` run configuration.
//!
//! Resolution order, later wins: built-in defaults, the config file,
//! `CPUF_<KEY>` environment variables, then command-line flags. Lists are
//! comma separated; `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use cpuf::WrapperPattern;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Every recognised key with its default, in canonical order.
const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "1"),
    ("scale", "0.125"),
    ("devices", "5"),
    ("challenges", "20"),
    ("sram_bytes", "2097152"),
    ("dram_bytes", "1073741824"),
    ("size_s", "32"),
    ("size_d", "131072"),
    ("segment_bits", "8"),
    ("wrapper", "all-ones"),
    ("refresh_pause_s", "40"),
    ("enroll_temperature", "20"),
    ("temperatures", "20,40,60"),
    ("pause_intervals", "40,60,120"),
    ("policy", "dynamic"),
    ("dynamic_c", "4"),
    ("match_threshold", "7"),
    ("aging_months", "12"),
    ("counterfeits", "5"),
    ("noise", "on"),
    ("store_golden_startup", "true"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Static,
    Dynamic,
}

/// Fully resolved configuration. Sizes and thresholds are full-scale here;
/// [`Config::scaled_size_d`] and [`Config::scaled_mt`] apply `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub scale: f64,
    pub devices: u64,
    pub challenges: usize,
    pub sram_bytes: u64,
    pub dram_bytes: u64,
    pub size_s: u64,
    pub size_d: u64,
    pub segment_bits: usize,
    pub wrapper: WrapperPattern,
    pub refresh_pause_s: f64,
    pub enroll_temperature: f64,
    pub temperatures: Vec<f64>,
    pub pause_intervals: Vec<f64>,
    pub policy: PolicyKind,
    pub dynamic_c: f64,
    pub match_threshold: u64,
    pub aging_months: f64,
    pub counterfeits: u64,
    pub noise: bool,
    pub store_golden_startup: bool,
    /// Resolved `key=value` lines in canonical order.
    canonical: String,
}

/// Where a value came from, for diagnostics.
#[derive(Debug, Clone)]
struct Origin {
    source: String,
    value: String,
}

fn config_error(origin: &Origin, key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: key `{key}` = `{}`: {msg}", origin.source, origin.value))
}

impl Config {
    /// Resolves a configuration from optional file contents, an environment
    /// lookup and flag overrides.
    pub fn resolve(
        file: Option<(&str, &str)>,
        env: impl Fn(&str) -> Option<String>,
        overrides: &[(&str, String)],
    ) -> Result<Config, CliError> {
        let mut values: BTreeMap<&str, Origin> = DEFAULTS
            .iter()
            .map(|(k, v)| (*k, Origin { source: "default".into(), value: v.to_string() }))
            .collect();

        if let Some((path, text)) = file {
            for (n, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let at = format!("{path}:{}", n + 1);
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| CliError::Config(format!("{at}: expected `key = value`, found `{line}`")))?;
                let k = k.trim();
                let key = DEFAULTS
                    .iter()
                    .map(|(d, _)| *d)
                    .find(|d| *d == k)
                    .ok_or_else(|| CliError::Config(format!("{at}: unknown key `{k}`")))?;
                values.insert(key, Origin { source: at, value: v.trim().to_string() });
            }
        }
        for (key, _) in DEFAULTS {
            let var = format!("CPUF_{}", key.to_ascii_uppercase());
            if let Some(v) = env(&var) {
                values.insert(key, Origin { source: format!("environment {var}"), value: v.trim().to_string() });
            }
        }
        for (key, v) in overrides {
            let key = DEFAULTS
                .iter()
                .map(|(d, _)| *d)
                .find(|d| d == key)
                .ok_or_else(|| CliError::Config(format!("unknown override `{key}`")))?;
            values.insert(key, Origin { source: format!("flag --{}", key.replace('_', "-")), value: v.clone() });
        }

        let get = |k: &str| &values[k];
        let c = Config {
            seed: parse_num(get("seed"), "seed")?,
            scale: parse_num(get("scale"), "scale")?,
            devices: parse_num(get("devices"), "devices")?,
            challenges: parse_num(get("challenges"), "challenges")?,
            sram_bytes: parse_num(get("sram_bytes"), "sram_bytes")?,
            dram_bytes: parse_num(get("dram_bytes"), "dram_bytes")?,
            size_s: parse_num(get("size_s"), "size_s")?,
            size_d: parse_num(get("size_d"), "size_d")?,
            segment_bits: parse_num(get("segment_bits"), "segment_bits")?,
            wrapper: {
                let o = get("wrapper");
                WrapperPattern::parse(&o.value)
                    .ok_or_else(|| config_error(o, "wrapper", "expected all-ones, all-zeros or checkered"))?
            },
            refresh_pause_s: parse_num(get("refresh_pause_s"), "refresh_pause_s")?,
            enroll_temperature: parse_temperature(get("enroll_temperature"), "enroll_temperature")?,
            temperatures: parse_list(get("temperatures"), "temperatures", parse_temperature)?,
            pause_intervals: parse_list(get("pause_intervals"), "pause_intervals", parse_num::<f64>)?,
            policy: match get("policy").value.as_str() {
                "static" => PolicyKind::Static,
                "dynamic" => PolicyKind::Dynamic,
                _ => return Err(config_error(get("policy"), "policy", "expected static or dynamic")),
            },
            dynamic_c: parse_num(get("dynamic_c"), "dynamic_c")?,
            match_threshold: parse_num(get("match_threshold"), "match_threshold")?,
            aging_months: parse_num(get("aging_months"), "aging_months")?,
            counterfeits: parse_num(get("counterfeits"), "counterfeits")?,
            noise: parse_switch(get("noise"), "noise")?,
            store_golden_startup: parse_switch(get("store_golden_startup"), "store_golden_startup")?,
            canonical: DEFAULTS.iter().fold(String::new(), |mut s, (k, _)| {
                let _ = writeln!(s, "{k}={}", values[k].value);
                s
            }),
        };

        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(config_error(get(key), key, msg)) };
        check(c.scale > 0.0 && c.scale <= 1.0, "scale", "must be in (0, 1]")?;
        check(c.devices >= 2, "devices", "at least 2 devices are needed for inter-device statistics")?;
        check(c.challenges >= 1, "challenges", "must be positive")?;
        check(c.size_s > 0 && c.size_s <= c.sram_bytes, "size_s", "must be in 1..=sram_bytes")?;
        check(c.size_d >= 32, "size_d", "must be at least 32")?;
        check(c.segment_bits > 0, "segment_bits", "must be positive")?;
        check(c.refresh_pause_s >= 0.0, "refresh_pause_s", "must not be negative")?;
        check(!c.temperatures.is_empty(), "temperatures", "must list at least one temperature")?;
        check(
            !c.pause_intervals.is_empty() && c.pause_intervals.iter().all(|p| *p > 0.0),
            "pause_intervals",
            "must list positive pauses",
        )?;
        check(c.dynamic_c >= 0.0, "dynamic_c", "must not be negative")?;
        check(c.aging_months >= 0.0, "aging_months", "must not be negative")?;
        check(c.counterfeits >= 1, "counterfeits", "must be positive")?;
        Ok(c)
    }

    /// `size_d` after scaling, rounded to whole 32-byte hash chunks.
    pub fn scaled_size_d(&self) -> u64 {
        (((self.size_d as f64 * self.scale) / 32.0).round() as u64).max(1) * 32
    }

    /// Effective scale after chunk rounding.
    pub fn effective_scale(&self) -> f64 {
        self.scaled_size_d() as f64 / self.size_d as f64
    }

    /// A full-scale HD threshold scaled linearly with the response size.
    pub fn scaled_mt(&self, full_scale: u64) -> u64 {
        (full_scale as f64 * self.effective_scale()).ceil() as u64
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    /// SHA-256 of the canonical resolved configuration.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_num<T: std::str::FromStr>(o: &Origin, key: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    o.value.parse::<T>().map_err(|e| config_error(o, key, e))
}

fn parse_temperature(o: &Origin, key: &str) -> Result<f64, CliError> {
    let t: f64 = parse_num(o, key)?;
    if t < 0.0 {
        return Err(config_error(o, key, "temperature must not be negative"));
    }
    if !(0.0..=100.0).contains(&t) {
        return Err(config_error(o, key, "temperature must be within 0..=100 °C"));
    }
    Ok(t)
}

fn parse_list<T>(o: &Origin, key: &str, item: fn(&Origin, &str) -> Result<T, CliError>) -> Result<Vec<T>, CliError> {
    o.value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| item(&Origin { source: o.source.clone(), value: s.to_string() }, key))
        .collect()
}

fn parse_switch(o: &Origin, key: &str) -> Result<bool, CliError> {
    match o.value.as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(config_error(o, key, "expected on/off")),
    }
}
