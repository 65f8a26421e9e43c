//! Dual-view turn equivalence.
//!
//! Two turns are equivalent when their tool actions are similar (cosine at
//! least `delta_tool`) *and* their observations are similar (cosine at least
//! `delta_result`). Native embeddings are used when the corpus provides them;
//! otherwise a hashed character 3-gram featurizer is applied to the
//! canonicalized action and to the observation text. Reasoning text never
//! participates.
//!
//! The predicate is reflexive and symmetric but not transitive; classes are
//! formed downstream as connected components.

mod lsh;

pub use lsh::{lsh_candidates, LshConfig};

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{check_unit_interval_open_closed, ConfigError};
use crate::corpus::{canonicalize_action, Turn};
use crate::hash::fnv1a;
use crate::math::sqrt;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    pub delta_tool: f64,
    pub delta_result: f64,
    /// Output dimension of the fallback featurizer.
    pub feature_dim: usize,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            delta_tool: 0.95,
            delta_result: 0.90,
            feature_dim: 512,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_unit_interval_open_closed("delta_tool", self.delta_tool)?;
        check_unit_interval_open_closed("delta_result", self.delta_result)?;
        if self.feature_dim < MIN_FEATURE_DIM {
            return Err(ConfigError::new(
                "feature_dim",
                alloc::format!("must be at least {MIN_FEATURE_DIM}, got {}", self.feature_dim),
            ));
        }
        Ok(())
    }
}

pub const MIN_FEATURE_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub enum SimilarityError {
    DimensionMismatch { left: usize, right: usize },
    /// One view comes from native embeddings and the other from the featurizer.
    SourceMismatch,
    ZeroVector,
}

impl fmt::Display for SimilarityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimilarityError::DimensionMismatch { left, right } => {
                write!(f, "vector dimensions differ ({left} vs {right})")
            }
            SimilarityError::SourceMismatch => {
                f.write_str("cannot compare a native embedding with a featurized one")
            }
            SimilarityError::ZeroVector => f.write_str("cosine of a zero vector is undefined"),
        }
    }
}

/// Hashed character 3-gram term frequencies, L2-normalized.
///
/// Texts shorter than three characters count as a single gram. The empty
/// string maps to the basis vector `e_0`.
///
/// # Panics
///
/// When `dim` is below [`MIN_FEATURE_DIM`].
pub fn featurize(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim >= MIN_FEATURE_DIM, "feature dimension must be at least {MIN_FEATURE_DIM}");
    let mut v = alloc::vec![0.0; dim];
    if text.is_empty() {
        v[0] = 1.0;
        return v;
    }
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(core::iter::once(text.len()))
        .collect();
    let chars = bounds.len() - 1;
    if chars < 3 {
        v[bucket(text.as_bytes(), dim)] += 1.0;
    } else {
        for w in 0..=chars - 3 {
            let gram = &text.as_bytes()[bounds[w]..bounds[w + 3]];
            v[bucket(gram, dim)] += 1.0;
        }
    }
    let norm = sqrt(v.iter().map(|x| x * x).sum());
    for x in &mut v {
        *x /= norm;
    }
    v
}

fn bucket(gram: &[u8], dim: usize) -> usize {
    (fnv1a(gram) % dim as u64) as usize
}

/// Where a view vector came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewSource {
    Native,
    Featurized,
}

/// A view vector with its norm computed once.
#[derive(Clone, Debug, PartialEq)]
pub struct View {
    values: Vec<f64>,
    norm: f64,
    source: ViewSource,
}

impl View {
    pub fn new(values: Vec<f64>, source: ViewSource) -> Self {
        let norm = sqrt(values.iter().map(|x| x * x).sum());
        Self { values, norm, source }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn source(&self) -> ViewSource {
        self.source
    }

    pub fn cosine(&self, other: &View) -> Result<f64, SimilarityError> {
        if self.source != other.source {
            return Err(SimilarityError::SourceMismatch);
        }
        if self.values.len() != other.values.len() {
            return Err(SimilarityError::DimensionMismatch {
                left: self.values.len(),
                right: other.values.len(),
            });
        }
        if self.norm == 0.0 || other.norm == 0.0 {
            return Err(SimilarityError::ZeroVector);
        }
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Ok((dot / (self.norm * other.norm)).clamp(-1.0, 1.0))
    }
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, SimilarityError> {
    View::new(u.to_vec(), ViewSource::Native).cosine(&View::new(v.to_vec(), ViewSource::Native))
}

/// Both views of a turn, ready for comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct TurnEmbedding {
    pub tool: View,
    pub result: View,
}

impl TurnEmbedding {
    pub fn of(turn: &Turn, cfg: &SimilarityConfig) -> Self {
        let tool = match &turn.tool_embedding {
            Some(e) => View::new(e.clone(), ViewSource::Native),
            None => View::new(
                featurize(&canonicalize_action(turn), cfg.feature_dim),
                ViewSource::Featurized,
            ),
        };
        let result = match &turn.result_embedding {
            Some(e) => View::new(e.clone(), ViewSource::Native),
            None => View::new(featurize(&turn.observation, cfg.feature_dim), ViewSource::Featurized),
        };
        Self { tool, result }
    }

    /// `(sim_tool, sim_result)`.
    pub fn similarities(&self, other: &TurnEmbedding) -> Result<(f64, f64), SimilarityError> {
        Ok((self.tool.cosine(&other.tool)?, self.result.cosine(&other.result)?))
    }

    pub fn equivalent(&self, other: &TurnEmbedding, cfg: &SimilarityConfig) -> Result<bool, SimilarityError> {
        let (tool, result) = self.similarities(other)?;
        Ok(tool >= cfg.delta_tool && result >= cfg.delta_result)
    }
}

/// The equivalence predicate on raw turns.
pub fn is_equivalent(a: &Turn, b: &Turn, cfg: &SimilarityConfig) -> Result<bool, SimilarityError> {
    TurnEmbedding::of(a, cfg).equivalent(&TurnEmbedding::of(b, cfg), cfg)
}
