//! Budgeted selection of SFT trajectories and RL tasks.
//!
//! Two strategies are offered. `TopWeight` ranks by weight, breaking ties by
//! id. `SeededSample` draws without replacement with probability proportional
//! to weight using exponential keys `-ln(u) / w`: items are visited in id
//! order, each consumes one uniform from a ChaCha8 stream, and the smallest
//! keys win. Zero-weight items are never selected.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::math::ln;
use crate::rl::{check_band, in_band, RlTaskScore};
use crate::sft::SftScore;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[default]
    TopWeight,
    SeededSample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub budget: usize,
    /// Per-task limit honoured before the remaining budget is filled.
    pub per_task_cap: Option<usize>,
    pub strategy: Strategy,
    pub seed: u64,
    /// Minimum pass rate of a task whose trajectories enter the SFT pool.
    pub sft_band_min: f64,
    pub rl_band: [f64; 2],
    /// Fail instead of truncating when the eligible pool is smaller than the budget.
    pub strict: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            budget: 1,
            per_task_cap: None,
            strategy: Strategy::TopWeight,
            seed: 0,
            sft_band_min: 0.7,
            rl_band: [0.1, 0.7],
            strict: false,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.budget == 0 {
            return Err(ConfigError::new("budget", "must be at least 1"));
        }
        if self.per_task_cap == Some(0) {
            return Err(ConfigError::new("per_task_cap", "must be at least 1 when set"));
        }
        if !(0.0..=1.0).contains(&self.sft_band_min) {
            return Err(ConfigError::new("sft_band_min", "must lie in [0, 1]"));
        }
        check_band("rl_band", self.rl_band)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SelectionError {
    InsufficientPool { requested: usize, available: usize },
    Config(ConfigError),
}

impl fmt::Display for SelectionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionError::InsufficientPool { requested, available } => write!(
                f,
                "eligible pool holds {available} entries with positive weight, budget asks for {requested}"
            ),
            SelectionError::Config(e) => e.fmt(f),
        }
    }
}

impl From<ConfigError> for SelectionError {
    fn from(e: ConfigError) -> Self {
        SelectionError::Config(e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Exclusion {
    /// Failed trajectory, or a weight that is not positive.
    ZeroWeight,
    OutOfBand { pass_rate: f64 },
    /// Eligible, but ranked below the budget cut.
    BelowCut { rank: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Picked {
    pub task_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traj_id: Option<String>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub task_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traj_id: Option<String>,
    #[serde(flatten)]
    pub reason: Exclusion,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// In selection order.
    pub selected: Vec<Picked>,
    /// In id order.
    pub excluded: Vec<Excluded>,
    /// Budget left unfilled after truncation.
    pub shortfall: usize,
}

struct Candidate {
    task_id: String,
    traj_id: Option<String>,
    weight: f64,
}

impl Candidate {
    fn id_cmp(&self, other: &Self) -> Ordering {
        (&self.task_id, &self.traj_id).cmp(&(&other.task_id, &other.traj_id))
    }
}

/// Pass rate per task, from the rewards present in `scores`.
pub fn pass_rates(scores: &[SftScore]) -> BTreeMap<&str, f64> {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for s in scores {
        let c = counts.entry(s.task_id.as_str()).or_default();
        c.0 += usize::from(s.reward == 1);
        c.1 += 1;
    }
    counts
        .into_iter()
        .map(|(k, (ok, n))| (k, ok as f64 / n as f64))
        .collect()
}

/// Trajectories of tasks whose pass rate reaches `min_pass_rate`, plus the excluded rest.
pub fn apply_sft_band(scores: &[SftScore], min_pass_rate: f64) -> (Vec<&SftScore>, Vec<Excluded>) {
    let rates = pass_rates(scores);
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for s in scores {
        let rate = rates[s.task_id.as_str()];
        if rate >= min_pass_rate {
            kept.push(s);
        } else {
            dropped.push(Excluded {
                task_id: s.task_id.clone(),
                traj_id: Some(s.traj_id.clone()),
                reason: Exclusion::OutOfBand { pass_rate: rate },
            });
        }
    }
    (kept, dropped)
}

/// Tasks whose pass rate lies in the inclusive `band`, plus the excluded rest.
pub fn apply_rl_band(scores: &[RlTaskScore], band: [f64; 2]) -> (Vec<&RlTaskScore>, Vec<Excluded>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for s in scores {
        if in_band(band, s.pass_rate) {
            kept.push(s);
        } else {
            dropped.push(Excluded {
                task_id: s.task_id.clone(),
                traj_id: None,
                reason: Exclusion::OutOfBand { pass_rate: s.pass_rate },
            });
        }
    }
    (kept, dropped)
}

/// Picks `cfg.budget` trajectories from the band-filtered SFT pool.
pub fn select_trajectories(scores: &[SftScore], cfg: &SelectionConfig) -> Result<Selection, SelectionError> {
    cfg.validate()?;
    let (kept, dropped) = apply_sft_band(scores, cfg.sft_band_min);
    let pool = kept
        .into_iter()
        .map(|s| Candidate {
            task_id: s.task_id.clone(),
            traj_id: Some(s.traj_id.clone()),
            weight: s.sampling_weight,
        })
        .collect();
    select(pool, dropped, cfg.budget, cfg)
}

/// Picks `k` tasks from the band-filtered RL pool, weighted by `p_select`.
pub fn select_tasks(scores: &[RlTaskScore], k: usize, cfg: &SelectionConfig) -> Result<Selection, SelectionError> {
    cfg.validate()?;
    if k == 0 {
        return Err(ConfigError::new("k", "must be at least 1").into());
    }
    let (kept, dropped) = apply_rl_band(scores, cfg.rl_band);
    let pool = kept
        .into_iter()
        .map(|s| Candidate {
            task_id: s.task_id.clone(),
            traj_id: None,
            weight: s.p_select,
        })
        .collect();
    select(pool, dropped, k, cfg)
}

fn select(
    pool: Vec<Candidate>,
    mut excluded: Vec<Excluded>,
    budget: usize,
    cfg: &SelectionConfig,
) -> Result<Selection, SelectionError> {
    let (mut eligible, zero): (Vec<Candidate>, Vec<Candidate>) = pool.into_iter().partition(|c| c.weight > 0.0);
    if cfg.strict && eligible.len() < budget {
        return Err(SelectionError::InsufficientPool {
            requested: budget,
            available: eligible.len(),
        });
    }
    excluded.extend(zero.into_iter().map(|c| Excluded {
        task_id: c.task_id,
        traj_id: c.traj_id,
        reason: Exclusion::ZeroWeight,
    }));

    eligible.sort_by(Candidate::id_cmp);
    let order = match cfg.strategy {
        Strategy::TopWeight => {
            let mut idx: Vec<usize> = (0..eligible.len()).collect();
            // Stable sort over id-ordered candidates keeps ties in id order.
            idx.sort_by(|&a, &b| eligible[b].weight.total_cmp(&eligible[a].weight));
            idx
        }
        Strategy::SeededSample => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let keys: Vec<f64> = eligible
                .iter()
                .map(|c| {
                    let u: f64 = rng.random();
                    -ln(1.0 - u) / c.weight
                })
                .collect();
            let mut idx: Vec<usize> = (0..eligible.len()).collect();
            idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
            idx
        }
    };

    let picked = take_with_cap(&order, &eligible, budget, cfg.per_task_cap);
    let mut chosen = alloc::vec![false; eligible.len()];
    for &i in &picked {
        chosen[i] = true;
    }
    let mut rank = alloc::vec![0; eligible.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    let shortfall = budget - picked.len();
    let selected = picked
        .iter()
        .map(|&i| Picked {
            task_id: eligible[i].task_id.clone(),
            traj_id: eligible[i].traj_id.clone(),
            weight: eligible[i].weight,
        })
        .collect();
    for (i, c) in eligible.into_iter().enumerate() {
        if !chosen[i] {
            excluded.push(Excluded {
                task_id: c.task_id,
                traj_id: c.traj_id,
                reason: Exclusion::BelowCut { rank: rank[i] },
            });
        }
    }
    excluded.sort_by(|a, b| (&a.task_id, &a.traj_id).cmp(&(&b.task_id, &b.traj_id)));
    Ok(Selection {
        selected,
        excluded,
        shortfall,
    })
}

/// Walks `order` respecting the per-task cap, then fills the rest of the budget ignoring it.
fn take_with_cap(order: &[usize], items: &[Candidate], budget: usize, cap: Option<usize>) -> Vec<usize> {
    let mut taken = Vec::with_capacity(budget.min(order.len()));
    let mut used = alloc::vec![false; items.len()];
    if let Some(cap) = cap {
        let mut per_task: BTreeMap<&str, usize> = BTreeMap::new();
        for &i in order {
            if taken.len() == budget {
                break;
            }
            let n = per_task.entry(items[i].task_id.as_str()).or_default();
            if *n < cap {
                *n += 1;
                used[i] = true;
                taken.push(i);
            }
        }
    }
    for &i in order {
        if taken.len() == budget {
            break;
        }
        if !used[i] {
            used[i] = true;
            taken.push(i);
        }
    }
    taken
}
