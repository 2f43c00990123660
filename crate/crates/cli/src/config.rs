//! Run configuration: one TOML document, then command-line overrides.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stmia_core::attacks::AttackMode;
use stmia_core::eval::sweep::DEFAULT_SEEDS;
use stmia_core::pipeline::AttackConfig;
use stmia_core::signals::SignalConfig;
use stmia_core::simulator::SimConfig;
use stmia_core::store::TruncateFrames;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub ks: Vec<usize>,
    pub q_values: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Subset-draw seeds for the reference-size sweep.
    pub seeds: Vec<u64>,
    pub modes: Vec<AttackMode>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 3, 5],
            q_values: vec![2, 3, 4, 5],
            sizes: vec![2, 5, 20, 100],
            seeds: DEFAULT_SEEDS.to_vec(),
            modes: vec![AttackMode::Supervised, AttackMode::Reference, AttackMode::QueryOnly],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub truncate_frames: TruncateFrames,
    pub signals: SignalConfig,
    pub attack: AttackConfig,
    pub simulator: SimConfig,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// `--seed` drives every seeded component except the sweep seed list.
    pub fn set_seed(&mut self, seed: u64) {
        self.simulator.seed = seed;
        self.attack.split_seed = seed;
        self.attack.train.seed = seed;
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.signals.validate().context("[signals]")?;
        self.attack.validate().context("[attack]")?;
        self.simulator.validate().context("[simulator]")?;
        let s = &self.sweep;
        if s.modes.iter().any(AttackMode::is_baseline) {
            bail!("[sweep] modes must be supervised, reference or query_only");
        }
        if s.seeds.is_empty() {
            bail!("[sweep] seeds must not be empty");
        }
        Ok(())
    }
}
