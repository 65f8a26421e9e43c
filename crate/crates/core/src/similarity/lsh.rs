//! Signed-random-projection LSH over the joint (tool, result) view space.
//!
//! Each turn is mapped to `[w_tool * tool / |tool|, w_result * result / |result|]`
//! and hashed against `bands * hyperplanes_per_band` Gaussian hyperplanes. Two
//! turns become a candidate pair when all bits of at least one band agree.
//! Candidates are only a retrieval step: callers verify each pair with the
//! exact predicate, so LSH can lose recall but never precision.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{SimilarityError, TurnEmbedding};
use crate::config::ConfigError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LshConfig {
    pub hyperplanes_per_band: usize,
    pub bands: usize,
    pub seed: u64,
}

impl Default for LshConfig {
    fn default() -> Self {
        Self {
            hyperplanes_per_band: 12,
            bands: 16,
            seed: 0,
        }
    }
}

/// Upper bound on the total number of hyperplanes.
pub const MAX_HYPERPLANES: usize = 4096;

impl LshConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.hyperplanes_per_band == 0 || self.hyperplanes_per_band > 64 {
            return Err(ConfigError::new(
                "hyperplanes_per_band",
                alloc::format!("must lie in 1..=64, got {}", self.hyperplanes_per_band),
            ));
        }
        if self.bands == 0 {
            return Err(ConfigError::new("bands", "must be positive"));
        }
        if self.bands.saturating_mul(self.hyperplanes_per_band) > MAX_HYPERPLANES {
            return Err(ConfigError::new(
                "bands",
                alloc::format!(
                    "bands x hyperplanes_per_band must not exceed {MAX_HYPERPLANES}, got {}",
                    self.bands * self.hyperplanes_per_band
                ),
            ));
        }
        Ok(())
    }

    pub fn total_hyperplanes(&self) -> usize {
        self.bands * self.hyperplanes_per_band
    }
}

/// Candidate pairs `(i, j)` with `i < j`, sorted and free of duplicates.
///
/// All embeddings must share their per-view dimensions.
pub fn lsh_candidates(
    embeddings: &[TurnEmbedding],
    view_weights: [f64; 2],
    cfg: &LshConfig,
) -> Result<Vec<(usize, usize)>, SimilarityError> {
    let Some(first) = embeddings.first() else {
        return Ok(Vec::new());
    };
    let tool_dim = first.tool.values().len();
    let result_dim = first.result.values().len();
    for e in embeddings {
        if e.tool.values().len() != tool_dim {
            return Err(SimilarityError::DimensionMismatch {
                left: tool_dim,
                right: e.tool.values().len(),
            });
        }
        if e.result.values().len() != result_dim {
            return Err(SimilarityError::DimensionMismatch {
                left: result_dim,
                right: e.result.values().len(),
            });
        }
    }

    let dim = tool_dim + result_dim;
    let planes = hyperplanes(cfg, dim);
    let keys = band_keys(embeddings, view_weights, cfg, &planes, tool_dim);

    let n = embeddings.len();
    let mut merged: Vec<u64> = Vec::new();
    let mut bucketed: Vec<(u64, u32)> = Vec::with_capacity(n);
    for band in 0..cfg.bands {
        bucketed.clear();
        bucketed.extend((0..n).map(|i| (keys[i * cfg.bands + band], i as u32)));
        bucketed.sort_unstable();
        let mut band_pairs: Vec<u64> = Vec::new();
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && bucketed[end].0 == bucketed[start].0 {
                end += 1;
            }
            for a in start..end {
                for b in a + 1..end {
                    // Indices are sorted within a bucket, so `a` < `b` holds for the pair too.
                    band_pairs.push(pack(bucketed[a].1, bucketed[b].1));
                }
            }
            start = end;
        }
        band_pairs.sort_unstable();
        band_pairs.dedup();
        merged = merge_sorted(&merged, &band_pairs);
    }
    Ok(merged.into_iter().map(unpack).collect())
}

fn hyperplanes(cfg: &LshConfig, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.total_hyperplanes() * dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Row-major `n x bands` band keys.
fn band_keys(
    embeddings: &[TurnEmbedding],
    [w_tool, w_result]: [f64; 2],
    cfg: &LshConfig,
    planes: &[f64],
    tool_dim: usize,
) -> Vec<u64> {
    let dim = planes.len() / cfg.total_hyperplanes();
    let mut keys = Vec::with_capacity(embeddings.len() * cfg.bands);
    for e in embeddings {
        let scale = |w: f64, norm: f64| if norm > 0.0 { w / norm } else { 0.0 };
        let ts = scale(w_tool, e.tool.norm());
        let rs = scale(w_result, e.result.norm());
        for band in 0..cfg.bands {
            let mut key = 0u64;
            for bit in 0..cfg.hyperplanes_per_band {
                let plane = &planes[(band * cfg.hyperplanes_per_band + bit) * dim..][..dim];
                let (pt, pr) = plane.split_at(tool_dim);
                let t: f64 = pt.iter().zip(e.tool.values()).map(|(a, b)| a * b).sum();
                let r: f64 = pr.iter().zip(e.result.values()).map(|(a, b)| a * b).sum();
                if ts * t + rs * r > 0.0 {
                    key |= 1 << bit;
                }
            }
            keys.push(key);
        }
    }
    keys
}

#[inline]
fn pack(i: u32, j: u32) -> u64 {
    (u64::from(i) << 32) | u64::from(j)
}

#[inline]
fn unpack(p: u64) -> (usize, usize) {
    ((p >> 32) as usize, (p & 0xffff_ffff) as usize)
}

fn merge_sorted(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            core::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            core::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
