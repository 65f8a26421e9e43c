//! Task scores for reinforcement-learning task selection.
//!
//! `v_struct` is the error branch ratio: over nodes with at least two distinct
//! children (self-loops excluded), the mean share of children whose potential
//! is below `eps_fail`. `v_div` is the unique chain ratio: distinct successful
//! node sequences (consecutive repeats collapsed) over sampled trajectories.
//! Tasks are drawn with a temperature softmax over `v_struct + alpha * v_div`.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::math::exp;
use crate::topology::{NodeId, QuotientGraph, TrajectoryPath};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivVariant {
    /// Distinct successful chains over sampled trajectories.
    #[default]
    UniqueChain,
    /// Successful trajectories over sampled trajectories (the pass rate).
    LiteralPassRatio,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    pub eps_fail: f64,
    pub alpha: f64,
    pub temperature: f64,
    /// Inclusive pass-rate band `[min, max]` of the RL pool.
    pub band: [f64; 2],
    pub div_variant: DivVariant,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            eps_fail: 0.2,
            alpha: 1.0,
            temperature: 1.0,
            band: [0.1, 0.7],
            div_variant: DivVariant::UniqueChain,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.eps_fail > 0.0 && self.eps_fail < 1.0) {
            return Err(ConfigError::new("eps_fail", "must lie in (0, 1)"));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(ConfigError::new("alpha", "must be a finite value >= 0"));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(ConfigError::new("temperature", "must be a finite value > 0"));
        }
        check_band("band", self.band)
    }

    pub fn in_band(&self, pass_rate: f64) -> bool {
        in_band(self.band, pass_rate)
    }
}

pub(crate) fn check_band(field: &'static str, [lo, hi]: [f64; 2]) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi {
        Ok(())
    } else {
        Err(ConfigError::new(field, alloc::format!("[{lo}, {hi}] is not an ordered sub-interval of [0, 1]")))
    }
}

pub(crate) fn in_band([lo, hi]: [f64; 2], pass_rate: f64) -> bool {
    lo <= pass_rate && pass_rate <= hi
}

/// Mean failing-child share over branching nodes; 0 when nothing branches.
pub fn error_branch_ratio(graph: &QuotientGraph, eps_fail: f64) -> f64 {
    let mut branching = 0usize;
    let mut total = 0.0;
    for v in graph.nodes() {
        let children: Vec<NodeId> = graph.children(v).collect();
        if children.len() < 2 {
            continue;
        }
        let failing = children.iter().filter(|&&u| graph.phi(u) < eps_fail).count();
        total += failing as f64 / children.len() as f64;
        branching += 1;
    }
    if branching == 0 {
        0.0
    } else {
        total / branching as f64
    }
}

/// Node sequence with consecutive duplicates collapsed.
pub fn chain_signature(path: &TrajectoryPath) -> Vec<NodeId> {
    let mut sig = path.nodes.clone();
    sig.dedup();
    sig
}

pub fn strategic_heterogeneity(paths: &[TrajectoryPath], variant: DivVariant) -> f64 {
    if paths.is_empty() {
        return 0.0;
    }
    let numerator = match variant {
        DivVariant::UniqueChain => paths
            .iter()
            .filter(|p| p.succeeded())
            .map(chain_signature)
            .collect::<BTreeSet<_>>()
            .len(),
        DivVariant::LiteralPassRatio => paths.iter().filter(|p| p.succeeded()).count(),
    };
    numerator as f64 / paths.len() as f64
}

/// Distinct successful chains of a task.
pub fn unique_chain_count(paths: &[TrajectoryPath]) -> usize {
    paths
        .iter()
        .filter(|p| p.succeeded())
        .map(chain_signature)
        .collect::<BTreeSet<_>>()
        .len()
}

/// Temperature softmax of `v_struct + alpha * v_div`, in input order.
///
/// # Panics
///
/// When `temperature` is not positive.
pub fn select_distribution(scores: &[(f64, f64)], alpha: f64, temperature: f64) -> Vec<f64> {
    assert!(temperature > 0.0, "temperature must be positive");
    let composites: Vec<f64> = scores.iter().map(|&(s, d)| s + alpha * d).collect();
    softmax(&composites, temperature)
}

/// Numerically stable softmax with temperature.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let Some(max) = logits.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    let weights: Vec<f64> = logits.iter().map(|&x| exp((x - max) / temperature)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RlTaskScore {
    pub task_id: String,
    pub pass_rate: f64,
    pub v_struct: f64,
    pub v_div: f64,
    pub composite: f64,
    /// Zero for tasks outside the pass-rate band.
    pub p_select: f64,
}

/// Scores every task; the softmax runs over the tasks inside `cfg.band`.
pub fn score_tasks<'a>(graphs: impl IntoIterator<Item = &'a QuotientGraph>, cfg: &RlConfig) -> Vec<RlTaskScore> {
    let mut out: Vec<RlTaskScore> = graphs
        .into_iter()
        .map(|g| {
            let v_struct = error_branch_ratio(g, cfg.eps_fail);
            let v_div = strategic_heterogeneity(g.paths(), cfg.div_variant);
            RlTaskScore {
                task_id: g.task_id().into(),
                pass_rate: g.pass_rate(),
                v_struct,
                v_div,
                composite: v_struct + cfg.alpha * v_div,
                p_select: 0.0,
            }
        })
        .collect();
    let banded: Vec<usize> = (0..out.len()).filter(|&i| cfg.in_band(out[i].pass_rate)).collect();
    let composites: Vec<f64> = banded.iter().map(|&i| out[i].composite).collect();
    for (&i, p) in banded.iter().zip(softmax(&composites, cfg.temperature)) {
        out[i].p_select = p;
    }
    out
}
