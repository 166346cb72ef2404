// SPDX-License-Identifier: Apache-2.0

//! Output directory layout, database files and run manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use cpuf::{codec, CrpDatabase};
use serde_json::json;

use crate::config::Config;
use crate::error::{CliError, CliResult};

pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn db(&self, device: u64) -> PathBuf {
        self.root.join("crp").join(format!("device_{device}.cpdb"))
    }

    pub fn retired_db(&self, device: u64, epoch: u32) -> PathBuf {
        self.root.join("crp").join("retired").join(format!("device_{device}_epoch_{epoch}.cpdb"))
    }

    /// Creates the parent directories of `rel` and returns its path.
    pub fn create(&self, rel: &str) -> CliResult<PathBuf> {
        let p = self.path(rel);
        ensure_parent(&p)?;
        Ok(p)
    }

    pub fn csv_writer(&self, rel: &str) -> CliResult<csv::Writer<fs::File>> {
        let p = self.create(rel)?;
        csv::Writer::from_path(&p).map_err(CliError::from)
    }

    pub fn load_db(&self, device: u64) -> CliResult<CrpDatabase> {
        let p = self.db(device);
        let bytes = fs::read(&p).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::MissingArtifact(format!("{} (run `cpuf enroll` first)", p.display()))
            } else {
                CliError::Io { context: format!("reading {}", p.display()), source: e }
            }
        })?;
        let db = codec::decode_database(&bytes)?;
        if db.device_id != device {
            return Err(CliError::Core(cpuf::Error::IncompatibleDevice(format!(
                "{} holds device {}",
                p.display(),
                db.device_id
            ))));
        }
        Ok(db)
    }

    pub fn save_db(&self, path: &Path, db: &CrpDatabase) -> CliResult<()> {
        ensure_parent(path)?;
        fs::write(path, codec::encode_database(db)).map_err(CliError::io(format!("writing {}", path.display())))
    }

    /// Writes a fresh manifest for this run and returns its path.
    pub fn write_manifest(&self, command: &str, config: &Config, extra: serde_json::Value) -> CliResult<PathBuf> {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        let dir = self.root.join("manifests");
        fs::create_dir_all(&dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
        let mut path = dir.join(format!("{}-{command}.json", now.as_nanos()));
        let mut n = 1;
        while path.exists() {
            path = dir.join(format!("{}-{command}-{n}.json", now.as_nanos()));
            n += 1;
        }
        let config_map: serde_json::Map<String, serde_json::Value> = config
            .canonical()
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), json!(v)))
            .collect();
        let manifest = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "timestamp_unix_s": now.as_secs(),
            "config_sha256": config.hash(),
            "config": config_map,
            "master_seed": config.seed,
            "effective_scale": config.effective_scale(),
            "size_d_bytes": config.scaled_size_d(),
            "details": extra,
        });
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(CliError::io(format!("writing {}", path.display())))?;
        Ok(path)
    }
}

fn ensure_parent(p: &Path) -> CliResult<()> {
    if let Some(dir) = p.parent() {
        fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    }
    Ok(())
}
