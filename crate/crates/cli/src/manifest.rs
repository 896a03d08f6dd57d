use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use cwan::training::TrainConfig;
use sha2::{Digest, Sha256};

/// Plain `key=value` record of everything needed to rerun a command.
#[derive(Debug, Default, Clone)]
pub struct RunManifest {
    entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let mut m = RunManifest::default();
        m.set("tool", "cwan");
        m.set("version", env!("CARGO_PKG_VERSION"));
        m.set("command", command);
        m.set(
            "args",
            std::env::args().skip(1).collect::<Vec<_>>().join(" "),
        );
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn config(&mut self, cfg: &TrainConfig) {
        self.set("beta", cfg.beta);
        self.set("tau", cfg.tau);
        self.set("d_c", cfg.d_c);
        self.set("hidden", cfg.hidden);
        self.set("lr_fg", cfg.lr_fg);
        self.set("lr_d", cfg.lr_d);
        self.set("iterations", cfg.iterations);
        self.set("seed", cfg.seed);
        self.set("lg_norm", format!("{:?}", cfg.lg_norm).to_lowercase());
        self.set("weighting", format!("{:?}", cfg.weighting).to_lowercase());
        self.set("leaky_slope", cfg.leaky_slope);
    }

    /// Records the path and SHA-256 of an input file under `key`.
    pub fn input(&mut self, key: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("{}", path.display()))?;
        self.set(key, path.display());
        self.set(&format!("{key}_sha256"), sha256_hex(&bytes));
        Ok(())
    }

    pub fn duration(&mut self, elapsed: Duration) {
        self.set("duration_seconds", format!("{:.3}", elapsed.as_secs_f64()));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            writeln!(out, "{k}={v}").unwrap();
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.txt");
        fs::write(&path, self.render()).with_context(|| format!("{}", path.display()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
