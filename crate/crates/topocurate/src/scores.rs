//! Score tables: CSV with a leading `#` parameter line, plus a JSON mirror.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use topocurate_core::{RlConfig, RlTaskScore, SftConfig, SftScore};

use crate::error::{Error, Result};
use crate::io::{ensure_parent, write_json};

pub const SFT_SCHEMA: &str = "topocurate-sft-scores/1";
pub const RL_SCHEMA: &str = "topocurate-rl-scores/1";

pub const SFT_HEADER: &str = "task_id,traj_id,reward,s_ref,s_eff,s_rare,z_ref,z_eff,z_rare,w,sampling_weight";
pub const RL_HEADER: &str = "task_id,pass_rate,v_struct,v_div,composite,p_select";

#[derive(Serialize, Deserialize)]
struct SftMirror {
    schema: String,
    config: SftConfig,
    scores: Vec<SftScore>,
}

#[derive(Serialize, Deserialize)]
struct RlMirror {
    schema: String,
    config: RlConfig,
    scores: Vec<RlTaskScore>,
}

pub fn sft_comment(cfg: &SftConfig) -> String {
    let w = &cfg.weights;
    format!(
        "# lambda={},{},{} (eff,rare,ref) eps_dip={} srare_denominator={}",
        w.lambda_eff,
        w.lambda_rare,
        w.lambda_ref,
        cfg.eps_dip,
        match cfg.srare_denominator {
            topocurate_core::sft::SrareDenominator::DistinctNodes => "distinct-nodes",
            topocurate_core::sft::SrareDenominator::Turns => "turns",
        }
    )
}

pub fn rl_comment(cfg: &RlConfig) -> String {
    format!(
        "# eps_fail={} alpha={} temperature={} band={},{} div_variant={}",
        cfg.eps_fail,
        cfg.alpha,
        cfg.temperature,
        cfg.band[0],
        cfg.band[1],
        match cfg.div_variant {
            topocurate_core::rl::DivVariant::UniqueChain => "unique-chain",
            topocurate_core::rl::DivVariant::LiteralPassRatio => "literal-pass-ratio",
        }
    )
}

/// The JSON mirror sits next to the CSV: `scores.csv` -> `scores.json`.
pub fn mirror_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn write_csv<T: Serialize>(path: &Path, comment: &str, header: &str, rows: &[T]) -> Result<()> {
    ensure_parent(path)?;
    let mut file = File::create(path).map_err(|e| Error::write(path, e))?;
    // Written by hand so that an empty table still has its header.
    writeln!(file, "{comment}\n{header}").map_err(|e| Error::write(path, e))?;
    // Quoting text fields keeps an id such as `#3` from reading back as a comment.
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .quote_style(csv::QuoteStyle::NonNumeric)
        .from_writer(file);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Internal(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::write(path, e))
}

fn read_csv<T: DeserializeOwned>(path: &Path, header: &str) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::read(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let found = r
        .headers()
        .map_err(|e| Error::input(format!("{}: {e}", path.display())))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found != header {
        return Err(Error::input(format!(
            "{}: expected header `{header}`, found `{found}`",
            path.display()
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::input(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn write_sft(path: &Path, cfg: &SftConfig, scores: &[SftScore]) -> Result<()> {
    write_csv(path, &sft_comment(cfg), SFT_HEADER, scores)?;
    write_json(
        &mirror_path(path),
        &SftMirror {
            schema: SFT_SCHEMA.into(),
            config: *cfg,
            scores: scores.to_vec(),
        },
    )
}

pub fn write_rl(path: &Path, cfg: &RlConfig, scores: &[RlTaskScore]) -> Result<()> {
    write_csv(path, &rl_comment(cfg), RL_HEADER, scores)?;
    write_json(
        &mirror_path(path),
        &RlMirror {
            schema: RL_SCHEMA.into(),
            config: *cfg,
            scores: scores.to_vec(),
        },
    )
}

pub fn read_sft(path: &Path) -> Result<Vec<SftScore>> {
    let rows: Vec<SftScore> = read_csv(path, SFT_HEADER)?;
    if let Some(bad) = rows.iter().find(|s| s.reward > 1) {
        return Err(Error::input(format!(
            "{}: trajectory `{}` has reward {}",
            path.display(),
            bad.traj_id,
            bad.reward
        )));
    }
    Ok(rows)
}

pub fn read_rl(path: &Path) -> Result<Vec<RlTaskScore>> {
    read_csv(path, RL_HEADER)
}
