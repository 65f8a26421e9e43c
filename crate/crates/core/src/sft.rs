//! Trajectory scores for supervised fine-tuning selection.
//!
//! Three raw scores are computed per trajectory on its task's quotient graph:
//!
//! - reflective recovery: potential dips along the path that are later
//!   restored to the pre-dip level, each worth `(phi(v_{t+k}) - phi(v_t)) / k`;
//! - semantic efficiency: the worst ratio of graph geodesic to walked length
//!   over ordered pairs of first occurrences;
//! - distributional diversity: mean of `phi(v) / ln(1 + popularity(v))` over
//!   the distinct nodes of the path.
//!
//! Scores are z-normalized over the whole candidate pool, combined linearly,
//! and gated by outcome: failed trajectories get sampling weight 0 and
//! successful ones `exp(w)`.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::math::{exp, ln_1p, sqrt};
use crate::topology::{NodeId, QuotientGraph, TrajectoryPath};

/// Linear weights of the normalized scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftWeights {
    pub lambda_eff: f64,
    pub lambda_rare: f64,
    pub lambda_ref: f64,
}

impl Default for SftWeights {
    fn default() -> Self {
        Self {
            lambda_eff: 0.4,
            lambda_rare: 0.3,
            lambda_ref: 0.3,
        }
    }
}

impl SftWeights {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let all = [self.lambda_eff, self.lambda_rare, self.lambda_ref];
        if all.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(ConfigError::new("lambda", "weights must be finite and non-negative"));
        }
        if all.iter().all(|l| *l == 0.0) {
            return Err(ConfigError::new("lambda", "at least one weight must be positive"));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lambda_eff: self.lambda_eff * factor,
            lambda_rare: self.lambda_rare * factor,
            lambda_ref: self.lambda_ref * factor,
        }
    }
}

/// What the diversity sum is divided by.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SrareDenominator {
    /// Average over distinct non-root nodes, so loops cannot inflate the score.
    #[default]
    DistinctNodes,
    /// Sum over every visited position, divided by the turn count.
    Turns,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftConfig {
    pub eps_dip: f64,
    pub srare_denominator: SrareDenominator,
    pub weights: SftWeights,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            eps_dip: 0.2,
            srare_denominator: SrareDenominator::DistinctNodes,
            weights: SftWeights::default(),
        }
    }
}

impl SftConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.eps_dip.is_finite() || self.eps_dip <= 0.0 {
            return Err(ConfigError::new("eps_dip", "must be a finite value > 0"));
        }
        self.weights.validate()
    }
}

/// Reflective recovery over a potential sequence (root included).
///
/// A dip at `t` means `phi[t] < phi[t-1] - eps_dip`; it is recovered at the
/// first `t + k` with `phi[t+k] >= phi[t-1]`. Unrecovered dips add nothing.
/// Scanning resumes at the recovery point.
pub fn reflective_recovery_series(phi: &[f64], eps_dip: f64) -> f64 {
    let mut total = 0.0;
    let mut t = 1;
    while t < phi.len() {
        let before = phi[t - 1];
        if phi[t] < before - eps_dip {
            if let Some(k) = (1..phi.len() - t).find(|&k| phi[t + k] >= before) {
                total += (phi[t + k] - phi[t]) / k as f64;
                t += k;
                continue;
            }
        }
        t += 1;
    }
    total
}

pub fn reflective_recovery(graph: &QuotientGraph, path: &TrajectoryPath, eps_dip: f64) -> f64 {
    let phi: Vec<f64> = path.nodes.iter().map(|&v| graph.phi(v)).collect();
    reflective_recovery_series(&phi, eps_dip)
}

/// Distinct nodes of a path with the index of their first occurrence.
fn first_occurrences(path: &TrajectoryPath) -> Vec<(NodeId, usize)> {
    let mut seen: Vec<(NodeId, usize)> = Vec::new();
    for (i, &v) in path.nodes.iter().enumerate() {
        if !seen.iter().any(|&(u, _)| u == v) {
            seen.push((v, i));
        }
    }
    seen
}

/// Minimum of `geodesic(u, v) / walked(u, v)` over ordered pairs of distinct
/// nodes in first-occurrence order; 1 when fewer than two distinct nodes.
pub fn semantic_efficiency(graph: &QuotientGraph, path: &TrajectoryPath) -> f64 {
    let firsts = first_occurrences(path);
    let mut best = 1.0f64;
    for (i, &(u, at_u)) in firsts.iter().enumerate() {
        if i + 1 == firsts.len() {
            break;
        }
        let dist = graph.distances_from(u);
        for &(v, at_v) in &firsts[i + 1..] {
            let walked = at_v - at_u;
            // The path itself is a walk from u to v, so the geodesic exists and is <= walked.
            let geo = dist.get(v.index()).copied().flatten().unwrap_or(walked);
            best = best.min(geo as f64 / walked as f64);
        }
    }
    best
}

/// Mean of `phi(v) / ln(1 + popularity(v))` over the path's non-root nodes.
pub fn distributional_diversity(
    graph: &QuotientGraph,
    path: &TrajectoryPath,
    denominator: SrareDenominator,
) -> f64 {
    let term = |v: NodeId| {
        let pop = graph.popularity(v).unwrap_or(1.0);
        graph.phi(v) / ln_1p(pop)
    };
    match denominator {
        SrareDenominator::DistinctNodes => {
            let nodes: Vec<NodeId> = first_occurrences(path)
                .into_iter()
                .map(|(v, _)| v)
                .filter(|v| !v.is_root())
                .collect();
            if nodes.is_empty() {
                return 0.0;
            }
            nodes.iter().map(|&v| term(v)).sum::<f64>() / nodes.len() as f64
        }
        SrareDenominator::Turns => {
            let turns = path.turn_count();
            if turns == 0 {
                return 0.0;
            }
            path.nodes[1..].iter().map(|&v| term(v)).sum::<f64>() / turns as f64
        }
    }
}

/// Unnormalized scores of one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSftScore {
    pub task_id: String,
    pub traj_id: String,
    pub reward: u8,
    pub s_ref: f64,
    pub s_eff: f64,
    pub s_rare: f64,
}

/// Raw scores for every trajectory of a graph, in path order.
pub fn raw_scores(graph: &QuotientGraph, cfg: &SftConfig) -> Vec<RawSftScore> {
    graph
        .paths()
        .iter()
        .map(|p| RawSftScore {
            task_id: graph.task_id().into(),
            traj_id: p.traj_id.clone(),
            reward: p.reward,
            s_ref: reflective_recovery(graph, p, cfg.eps_dip),
            s_eff: semantic_efficiency(graph, p),
            s_rare: distributional_diversity(graph, p, cfg.srare_denominator),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SftScore {
    pub task_id: String,
    pub traj_id: String,
    pub reward: u8,
    pub s_ref: f64,
    pub s_eff: f64,
    pub s_rare: f64,
    pub z_ref: f64,
    pub z_eff: f64,
    pub z_rare: f64,
    pub w: f64,
    pub sampling_weight: f64,
}

/// Relative spread below which a pool counts as constant.
const CONSTANT_TOLERANCE: f64 = 1e-12;

/// Population z-scores. A constant input (up to rounding) maps to all zeros.
pub fn zscore(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = sqrt(var);
    if std <= CONSTANT_TOLERANCE * (1.0 + mean.abs()) {
        return alloc::vec![0.0; values.len()];
    }
    values.iter().map(|x| (x - mean) / std).collect()
}

/// Normalizes each score over the pool, combines them and applies the
/// outcome gate.
pub fn composite_and_sampling(raw: &[RawSftScore], weights: &SftWeights) -> Vec<SftScore> {
    let column = |f: fn(&RawSftScore) -> f64| zscore(&raw.iter().map(f).collect::<Vec<_>>());
    let z_ref = column(|r| r.s_ref);
    let z_eff = column(|r| r.s_eff);
    let z_rare = column(|r| r.s_rare);
    raw.iter()
        .enumerate()
        .map(|(i, r)| {
            let w = weights.lambda_ref * z_ref[i] + weights.lambda_rare * z_rare[i] + weights.lambda_eff * z_eff[i];
            SftScore {
                task_id: r.task_id.clone(),
                traj_id: r.traj_id.clone(),
                reward: r.reward,
                s_ref: r.s_ref,
                s_eff: r.s_eff,
                s_rare: r.s_rare,
                z_ref: z_ref[i],
                z_eff: z_eff[i],
                z_rare: z_rare[i],
                w,
                sampling_weight: if r.reward == 1 { exp(w) } else { 0.0 },
            }
        })
        .collect()
}

/// Scores every trajectory of every graph against one shared pool.
pub fn score_pool<'a>(graphs: impl IntoIterator<Item = &'a QuotientGraph>, cfg: &SftConfig) -> Vec<SftScore> {
    let raw: Vec<RawSftScore> = graphs.into_iter().flat_map(|g| raw_scores(g, cfg)).collect();
    composite_and_sampling(&raw, &cfg.weights)
}
