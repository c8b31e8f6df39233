// SPDX-License-Identifier: MIT OR Apache-2.0

//! Suite configuration, read from TOML. Every field has a default, so an
//! empty file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::{RunManifest, MANIFEST_SCHEMA};
use super::steer::SteerConfig;
use crate::banks::{ArityBankConfig, Constructor, EdgeGridConfig};
use crate::harness::{GlassBoxConfig, PlantedBankConfig};
use crate::rng::{label, stream_id};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSubstrateConfig {
    pub tag: String,
    pub config: PlantedBankConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagConfig {
    pub layers: Vec<usize>,
    pub constructors: Vec<Constructor>,
    pub tuple_budget: usize,
    pub tuple_seed: u64,
    pub projection_dim: usize,
    pub projection_seed: u64,
    pub bootstrap_resamples: usize,
    pub bootstrap_level: f64,
    pub bootstrap_seed: u64,
    /// Capture manifest to read states from instead of the planted substrates.
    pub ingest_manifest: Option<PathBuf>,
}

impl Default for DiagConfig {
    fn default() -> Self {
        DiagConfig {
            layers: (0..6).collect(),
            constructors: Constructor::ALL.to_vec(),
            tuple_budget: 20,
            tuple_seed: 3,
            projection_dim: 64,
            projection_seed: 42,
            bootstrap_resamples: 1000,
            bootstrap_level: 0.95,
            bootstrap_seed: 21,
            ingest_manifest: None,
        }
    }
}

fn default_substrates() -> Vec<PlantedSubstrateConfig> {
    [("planted-a", 0.95, 0.10, 7), ("planted-b", 0.90, 0.15, 8), ("planted-c", 0.85, 0.20, 9)]
        .into_iter()
        .map(|(tag, rho, sigma, seed)| PlantedSubstrateConfig {
            tag: tag.into(),
            config: PlantedBankConfig { rho, sigma, seed, ..Default::default() },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub arity: ArityBankConfig,
    pub planted: Vec<PlantedSubstrateConfig>,
    pub diag: DiagConfig,
    pub edge: EdgeGridConfig,
    pub glassbox: GlassBoxConfig,
    pub steer: SteerConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            arity: ArityBankConfig::default(),
            planted: default_substrates(),
            diag: DiagConfig::default(),
            edge: EdgeGridConfig::default(),
            glassbox: GlassBoxConfig::default(),
            steer: SteerConfig::default(),
        }
    }
}

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SuiteConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the config snapshot of a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.trim_start().starts_with('{') {
            let value: serde_json::Value = serde_json::from_str(&text)?;
            if value.get("schema").and_then(|s| s.as_str()) == Some(MANIFEST_SCHEMA) {
                let m: RunManifest = serde_json::from_value(value)?;
                let cfg: SuiteConfig = serde_json::from_value(m.config)?;
                cfg.validate()?;
                return Ok(cfg);
            }
            return Err(Error::Config(format!("{} is JSON but not a run manifest", path.display())));
        }
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.glassbox.validate()?;
        self.steer.validate()?;
        for p in &self.planted {
            p.config.validate()?;
        }
        let mut tags: Vec<&str> = self.planted.iter().map(|p| p.tag.as_str()).collect();
        tags.sort_unstable();
        tags.dedup();
        if tags.len() != self.planted.len() {
            return Err(Error::Config("planted substrate tags must be unique".into()));
        }
        if self.diag.layers.is_empty() || self.diag.constructors.is_empty() {
            return Err(Error::Config("diagnostic layer grid and constructor list must be non-empty".into()));
        }
        Ok(())
    }

    /// Replaces every seed with one derived from `seed`.
    pub fn apply_seed(&mut self, seed: u64) {
        let s = |what: &str| stream_id(&[seed, label(what)]);
        self.arity.seed = s("arity-bank");
        for p in &mut self.planted {
            p.config.seed = stream_id(&[seed, label("planted"), label(&p.tag)]);
        }
        self.diag.tuple_seed = s("tuples");
        self.diag.projection_seed = s("diag-projection");
        self.diag.bootstrap_seed = s("diag-bootstrap");
        self.edge.seed = s("edge-bank");
        self.glassbox.seed = s("glass-box");
        self.steer.projection_seed = s("steer-projection");
        self.steer.path_seed = s("paths");
        self.steer.bootstrap_seed = s("steer-bootstrap");
    }
}
