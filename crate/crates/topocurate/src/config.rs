//! Pipeline configuration: a TOML file overlaid with command-line flags.
//!
//! ```toml
//! [topology]
//! mode = "lsh"
//!
//! [topology.similarity]
//! delta_tool = 0.95
//!
//! [sft.weights]
//! lambda_eff = 0.4
//!
//! [selection]
//! budget = 500
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use topocurate_core::{RlConfig, SelectionConfig, SftConfig, TopologyConfig};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub topology: TopologyConfig,
    pub sft: SftConfig,
    pub rl: RlConfig,
    pub selection: SelectionConfig,
}

/// A loaded config plus which optional keys the file actually set.
#[derive(Clone, Debug, Default)]
pub struct Loaded {
    pub config: PipelineConfig,
    pub budget_set: bool,
}

pub fn load(path: Option<&Path>) -> Result<Loaded> {
    let Some(path) = path else {
        return Ok(Loaded::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    let config: PipelineConfig =
        toml::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    let raw: toml::Table = toml::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    let budget_set = raw
        .get("selection")
        .and_then(|s| s.as_table())
        .is_some_and(|s| s.contains_key("budget"));
    Ok(Loaded { config, budget_set })
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let wrap = |e: topocurate_core::ConfigError| Error::input(e.to_string());
        self.topology.validate().map_err(wrap)?;
        self.sft.validate().map_err(wrap)?;
        self.rl.validate().map_err(wrap)?;
        self.selection.validate().map_err(wrap)
    }
}

/// Parses `a,b,...` into exactly `N` reals.
pub fn parse_reals<const N: usize>(flag: &str, text: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(Error::input(format!("--{flag} expects {N} comma-separated numbers, got `{text}`")));
    }
    let mut out = [0.0; N];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p
            .parse()
            .map_err(|_| Error::input(format!("--{flag}: `{p}` is not a number")))?;
    }
    Ok(out)
}
