//! Planted corpora with known ground truth, and brute-force oracles.
//!
//! A [`PlantedTaskRecipe`] is first expanded into a [`TaskPlan`]: one label
//! sequence per trajectory, where equal labels are meant to be equivalent
//! turns. Ground truth is computed from the plan alone by [`evaluate_plan`]
//! (per-label counting, Floyd–Warshall, direct formula evaluation), so it
//! never touches the graph builder or the metric code it is used to check.
//! Turns are then rendered with embeddings chosen so that the intended
//! partition is unambiguous.
//!
//! Recipe layout, with `start` as hub 0:
//!
//! ```text
//! root -> start -> h0.ok{x} -> hub1 -> h1.ok{x} -> ... -> fam{i}.0 -> ... -> fam{i}.{L-1}
//!                \-> h0.fail{y}        \-> h1.fail{y}
//! ```
//!
//! The ok children of the last hub are the family heads. A dip event adds a
//! self-contained gadget whose recovering trajectory sees the potentials
//! `pre -> dip -> pre`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::corpus::{Corpus, CorpusBuilder, Task, Trajectory, TrajectoryRecord, Turn};
use crate::hash::{fnv1a, mix64};
use crate::math::{ln_1p, sqrt};
use crate::similarity::{SimilarityConfig, SimilarityError, TurnEmbedding};
use crate::topology::{NodeId, PhiConfig, QuotientGraph, TrajectoryPath};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingMode {
    /// Native embeddings on near-orthogonal class codes (intra-class cosine
    /// >= 0.99, inter-class <= 0.3 on at least one view).
    #[default]
    WellSeparated,
    /// No embeddings; class-specific text for the fallback featurizer.
    FeaturizedText,
    /// Native embeddings whose intra-class cosines straddle the default
    /// thresholds. The intended partition is not guaranteed.
    Marginal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopInsertion {
    /// Index among the successful trajectories.
    pub trajectory: usize,
    /// Family step after which the detour `loop -> step` is inserted.
    pub position: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipEvent {
    /// Shared nodes walked before the pre-dip node.
    pub lead_in: usize,
    /// Potential before the dip, a multiple of 0.1 in (0, 1).
    pub pre_level: f64,
    /// Potential at the dip, a multiple of 0.1 in (0, pre_level).
    pub dip_level: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBranch {
    pub children: usize,
    pub failing: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedTaskRecipe {
    pub task_id: String,
    pub num_trajectories: usize,
    /// The first `successes` trajectories succeed.
    pub successes: usize,
    pub solution_families: usize,
    pub family_length: usize,
    pub loop_insertions: Vec<LoopInsertion>,
    pub dip_recovery_events: Vec<DipEvent>,
    /// One entry per hub, in walking order.
    pub error_branches: Vec<ErrorBranch>,
}

impl Default for PlantedTaskRecipe {
    fn default() -> Self {
        Self {
            task_id: "task".into(),
            num_trajectories: 4,
            successes: 4,
            solution_families: 1,
            family_length: 2,
            loop_insertions: Vec::new(),
            dip_recovery_events: Vec::new(),
            error_branches: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedCorpusSpec {
    pub tasks: Vec<PlantedTaskRecipe>,
    pub embedding_mode: EmbeddingMode,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for PlantedCorpusSpec {
    fn default() -> Self {
        Self {
            tasks: Vec::new(),
            embedding_mode: EmbeddingMode::WellSeparated,
            embedding_dim: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpecError {
    pub task_id: Option<String>,
    pub message: String,
}

impl SpecError {
    fn new(task_id: &str, message: impl Into<String>) -> Self {
        Self {
            task_id: Some(task_id.into()),
            message: message.into(),
        }
    }
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.task_id {
            Some(t) => write!(f, "recipe `{t}`: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedTrajectory {
    pub traj_id: String,
    pub labels: Vec<String>,
    pub reward: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub task_id: String,
    pub trajectories: Vec<PlannedTrajectory>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTruth {
    pub traj_id: String,
    pub reward: u8,
    pub s_ref: f64,
    pub s_eff: f64,
    pub s_rare: f64,
    /// Potential never decreases along the path.
    pub phi_monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskTruth {
    pub task_id: String,
    /// Class labels in node order; node `i + 1` carries `labels[i]`.
    pub labels: Vec<String>,
    /// Canonical class index per turn, in (trajectory, turn) order.
    pub partition: Vec<usize>,
    pub phi: BTreeMap<String, f64>,
    pub root_phi: f64,
    pub pass_rate: f64,
    pub trajectories: Vec<TrajectoryTruth>,
    pub v_struct: f64,
    pub unique_chains: usize,
    pub v_div: f64,
}

impl TaskTruth {
    /// Non-root class count.
    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    pub fn trajectory(&self, traj_id: &str) -> Option<&TrajectoryTruth> {
        self.trajectories.iter().find(|t| t.traj_id == traj_id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub eps_dip: f64,
    pub eps_fail: f64,
    /// False when the embedding mode does not guarantee the intended partition.
    pub partition_exact: bool,
    pub tasks: Vec<TaskTruth>,
}

impl GroundTruth {
    pub fn task(&self, task_id: &str) -> Option<&TaskTruth> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }
}

pub const DEFAULT_EPS_DIP: f64 = 0.2;
pub const DEFAULT_EPS_FAIL: f64 = 0.2;

/// Builds the corpus and its ground truth at the default dip and failure thresholds.
pub fn generate(spec: &PlantedCorpusSpec) -> Result<(Corpus, GroundTruth), SpecError> {
    generate_with(spec, DEFAULT_EPS_DIP, DEFAULT_EPS_FAIL)
}

pub fn generate_with(spec: &PlantedCorpusSpec, eps_dip: f64, eps_fail: f64) -> Result<(Corpus, GroundTruth), SpecError> {
    if spec.embedding_dim < 2 {
        return Err(SpecError {
            task_id: None,
            message: "embedding_dim must be at least 2".into(),
        });
    }
    let mut ids = BTreeSet::new();
    let mut builder = CorpusBuilder::new();
    let mut truths = Vec::with_capacity(spec.tasks.len());
    for (ti, recipe) in spec.tasks.iter().enumerate() {
        if !ids.insert(recipe.task_id.as_str()) {
            return Err(SpecError::new(&recipe.task_id, "duplicate task id"));
        }
        let plan = plan(recipe)?;
        let truth = evaluate_plan(&plan, eps_dip, eps_fail);
        if truth.class_count() > spec.embedding_dim * spec.embedding_dim {
            return Err(SpecError::new(
                &recipe.task_id,
                format!("{} classes do not fit embedding_dim {}", truth.class_count(), spec.embedding_dim),
            ));
        }
        let task_seed = mix64(spec.seed ^ mix64(ti as u64 + 1));
        for record in render(&plan, &truth.partition, spec.embedding_mode, spec.embedding_dim, task_seed) {
            builder
                .push(0, record)
                .map_err(|e| SpecError::new(&recipe.task_id, format!("rendered record rejected: {e}")))?;
        }
        truths.push(truth);
    }
    Ok((
        builder.finish(),
        GroundTruth {
            eps_dip,
            eps_fail,
            partition_exact: spec.embedding_mode != EmbeddingMode::Marginal,
            tasks: truths,
        },
    ))
}

fn snap_tenths(task: &str, what: &str, level: f64) -> Result<usize, SpecError> {
    let scaled = level * 10.0;
    let tenths = libm::round(scaled);
    if !(level > 0.0 && level < 1.0) || libm::fabs(scaled - tenths) > 1e-9 {
        return Err(SpecError::new(task, format!("{what} {level} is not a multiple of 0.1 in (0, 1)")));
    }
    Ok(tenths as usize)
}

/// Expands a recipe into label sequences.
pub fn plan(recipe: &PlantedTaskRecipe) -> Result<TaskPlan, SpecError> {
    let id = recipe.task_id.as_str();
    let err = |m: String| Err(SpecError::new(id, m));
    if id.is_empty() {
        return Err(SpecError::new(id, "task id must be non-empty"));
    }
    let (n, s, f, len) = (
        recipe.num_trajectories,
        recipe.successes,
        recipe.solution_families,
        recipe.family_length,
    );
    if n == 0 && recipe.dip_recovery_events.is_empty() {
        return err("a task needs at least one trajectory".into());
    }
    if s > n {
        return err(format!("{s} successes exceed {n} trajectories"));
    }
    if f == 0 || len == 0 {
        return err("solution_families and family_length must be positive".into());
    }
    if s > 0 && f > s {
        return err(format!("{f} families need at least {f} successes"));
    }
    for (b, br) in recipe.error_branches.iter().enumerate() {
        if br.children < 2 || br.failing > br.children {
            return err(format!("branch {b}: need children >= 2 and failing <= children"));
        }
        let ok = br.children - br.failing;
        let last = b + 1 == recipe.error_branches.len();
        if last && ok != f {
            return err(format!("branch {b}: the last hub needs {f} ok children (one per family), got {ok}"));
        }
        if !last && ok == 0 {
            return err(format!("branch {b}: an inner hub needs an ok child"));
        }
    }
    for l in &recipe.loop_insertions {
        if l.trajectory >= s || l.position >= len {
            return err(format!("loop at ({}, {}) is outside the successful family steps", l.trajectory, l.position));
        }
    }

    let branches = &recipe.error_branches;
    let hub = |b: usize| if b == 0 { "start".to_string() } else { format!("hub{b}") };
    // Route through the hubs choosing ok child `pick % ok_b`; ends at the family head.
    let route = |pick: usize, family: usize| -> Vec<String> {
        let mut out = alloc::vec![hub(0)];
        for (b, br) in branches.iter().enumerate() {
            if b + 1 == branches.len() {
                break;
            }
            out.push(format!("h{b}.ok{}", pick % (br.children - br.failing)));
            out.push(hub(b + 1));
        }
        out.push(format!("fam{family}.0"));
        out
    };
    let family_tail = |family: usize, loops: &[(usize, usize)]| -> Vec<String> {
        let mut out = Vec::new();
        for p in 0..len {
            if p > 0 {
                out.push(format!("fam{family}.{p}"));
            }
            for &(k, _) in loops.iter().filter(|&&(_, at)| at == p) {
                out.push(format!("loop{k}"));
                out.push(format!("fam{family}.{p}"));
            }
        }
        out
    };

    let mut trajectories = Vec::new();
    for i in 0..s {
        let family = i % f;
        let loops: Vec<(usize, usize)> = recipe
            .loop_insertions
            .iter()
            .enumerate()
            .filter(|(_, l)| l.trajectory == i)
            .map(|(k, l)| (k, l.position))
            .collect();
        let mut labels = route(i, family);
        labels.extend(family_tail(family, &loops));
        trajectories.push(PlannedTrajectory {
            traj_id: format!("s{i}"),
            labels,
            reward: 1,
        });
    }

    let failing_children: Vec<(usize, usize)> = branches
        .iter()
        .enumerate()
        .flat_map(|(b, br)| (0..br.failing).map(move |y| (b, y)))
        .collect();
    for j in 0..n - s {
        let labels = match failing_children.get(j) {
            Some(&(b, y)) => {
                let mut out = alloc::vec![hub(0)];
                for (b2, br) in branches.iter().enumerate().take(b) {
                    out.push(format!("h{b2}.ok{}", j % (br.children - br.failing)));
                    out.push(hub(b2 + 1));
                }
                out.push(format!("h{b}.fail{y}"));
                out
            }
            None => {
                let family = j % f;
                let mut out = route(j, family);
                out.extend(family_tail(family, &[]));
                out
            }
        };
        trajectories.push(PlannedTrajectory {
            traj_id: format!("f{j}"),
            labels,
            reward: 0,
        });
    }

    for (e, dip) in recipe.dip_recovery_events.iter().enumerate() {
        let pre = snap_tenths(id, "pre_level", dip.pre_level)?;
        let low = snap_tenths(id, "dip_level", dip.dip_level)?;
        if low >= pre {
            return err(format!("dip {e}: dip_level must be below pre_level"));
        }
        let node = |name: &str| format!("dip{e}.{name}");
        let leads: Vec<String> = (0..dip.lead_in).map(|l| node(&format!("lead{l}"))).collect();
        let through = |tail: &[&str]| -> Vec<String> {
            let mut out = leads.clone();
            out.push(node("pre"));
            out.extend(tail.iter().map(|t| node(t)));
            out
        };
        let mut push = |kind: &str, count: usize, labels: Vec<String>, reward: u8| {
            for c in 0..count {
                trajectories.push(PlannedTrajectory {
                    traj_id: format!("d{e}.{kind}{c}"),
                    labels: labels.clone(),
                    reward,
                });
            }
        };
        // Ten trajectories pass `pre` (pre of them succeed); `low` is visited by
        // `low` recovering successes and `10 - low` failures that bypass `pre`.
        push("rec", low, through(&["low", "post"]), 1);
        push("direct", pre - low, through(&["post"]), 1);
        push("prefail", 10 - pre, through(&["post", "sink"]), 0);
        push(
            "lowfail",
            10 - low,
            alloc::vec![node("src"), node("low"), node("lowsink")],
            0,
        );
    }

    let plan = TaskPlan {
        task_id: id.to_string(),
        trajectories,
    };
    check_declared_nodes(recipe, &plan)?;
    Ok(plan)
}

/// Every declared hub child must be walked by some trajectory.
fn check_declared_nodes(recipe: &PlantedTaskRecipe, plan: &TaskPlan) -> Result<(), SpecError> {
    let seen: BTreeSet<&str> = plan
        .trajectories
        .iter()
        .flat_map(|t| t.labels.iter().map(String::as_str))
        .collect();
    let last = recipe.error_branches.len().saturating_sub(1);
    for (b, br) in recipe.error_branches.iter().enumerate() {
        let ok = br.children - br.failing;
        let mut names: Vec<String> = (0..br.failing).map(|y| format!("h{b}.fail{y}")).collect();
        if b < last {
            names.extend((0..ok).map(|x| format!("h{b}.ok{x}")));
        } else {
            names.extend((0..ok).map(|x| format!("fam{x}.0")));
        }
        if let Some(missing) = names.iter().find(|n| !seen.contains(n.as_str())) {
            return Err(SpecError::new(
                &recipe.task_id,
                format!("node `{missing}` is never walked; add trajectories"),
            ));
        }
    }
    Ok(())
}

/// Ground truth of a plan, from label sequences only.
pub fn evaluate_plan(plan: &TaskPlan, eps_dip: f64, eps_fail: f64) -> TaskTruth {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut seqs: Vec<Vec<usize>> = Vec::new();
    let mut partition = Vec::new();
    for t in &plan.trajectories {
        let mut seq = alloc::vec![0];
        for l in &t.labels {
            let next = labels.len() + 1;
            let c = *index.entry(l.as_str()).or_insert_with(|| {
                labels.push(l.clone());
                next
            });
            seq.push(c);
            partition.push(c - 1);
        }
        seqs.push(seq);
    }
    let k = labels.len() + 1;
    let n = plan.trajectories.len();

    let mut visitors = alloc::vec![BTreeSet::new(); k];
    for (ti, seq) in seqs.iter().enumerate() {
        for &c in seq {
            visitors[c].insert(ti);
        }
    }
    let phi: Vec<f64> = visitors
        .iter()
        .map(|v| {
            let ok = v.iter().filter(|&&t| plan.trajectories[t].reward == 1).count();
            ok as f64 / v.len() as f64
        })
        .collect();

    let mut adj = alloc::vec![alloc::vec![false; k]; k];
    for seq in &seqs {
        for w in seq.windows(2) {
            adj[w[0]][w[1]] = true;
        }
    }
    let dist = floyd_warshall(&adj);

    let trajectories = plan
        .trajectories
        .iter()
        .zip(&seqs)
        .map(|(t, seq)| {
            let series: Vec<f64> = seq.iter().map(|&c| phi[c]).collect();
            let mut first: Vec<(usize, usize)> = Vec::new();
            for (pos, &c) in seq.iter().enumerate() {
                if first.iter().all(|&(d, _)| d != c) {
                    first.push((c, pos));
                }
            }
            let mut s_eff = 1.0f64;
            for a in 0..first.len() {
                for b in a + 1..first.len() {
                    let (u, pu) = first[a];
                    let (v, pv) = first[b];
                    let d = dist[u][v].expect("walked pairs are connected");
                    s_eff = s_eff.min(d as f64 / (pv - pu) as f64);
                }
            }
            let distinct: Vec<usize> = first.iter().map(|&(c, _)| c).filter(|&c| c != 0).collect();
            let s_rare = distinct
                .iter()
                .map(|&c| phi[c] / ln_1p(visitors[c].len() as f64 / n as f64))
                .sum::<f64>()
                / distinct.len() as f64;
            TrajectoryTruth {
                traj_id: t.traj_id.clone(),
                reward: t.reward,
                s_ref: recovery_oracle(&series, eps_dip),
                s_eff,
                s_rare,
                phi_monotone: series.windows(2).all(|w| w[1] >= w[0]),
            }
        })
        .collect();

    let mut branch_shares = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for u in 0..k {
        let children: Vec<usize> = (0..k).filter(|&v| v != u && adj[u][v]).collect();
        if children.len() >= 2 {
            let failing = children.iter().filter(|&&v| phi[v] < eps_fail).count();
            branch_shares.push(failing as f64 / children.len() as f64);
        }
    }
    let v_struct = if branch_shares.is_empty() {
        0.0
    } else {
        branch_shares.iter().sum::<f64>() / branch_shares.len() as f64
    };

    let chains: BTreeSet<Vec<usize>> = plan
        .trajectories
        .iter()
        .zip(&seqs)
        .filter(|(t, _)| t.reward == 1)
        .map(|(_, seq)| {
            let mut c = seq.clone();
            c.dedup();
            c
        })
        .collect();
    let successes = plan.trajectories.iter().filter(|t| t.reward == 1).count();

    TaskTruth {
        task_id: plan.task_id.clone(),
        phi: labels.iter().cloned().zip(phi[1..].iter().copied()).collect(),
        labels,
        partition,
        root_phi: phi[0],
        pass_rate: successes as f64 / n as f64,
        trajectories,
        v_struct,
        unique_chains: chains.len(),
        v_div: chains.len() as f64 / n as f64,
    }
}

/// Dip/recovery sum written against the definition: for each dip position,
/// look ahead for the first restoring position, then jump there.
fn recovery_oracle(series: &[f64], eps: f64) -> f64 {
    let mut sum = 0.0;
    let mut skip_until = 0;
    for t in 1..series.len() {
        if t < skip_until || series[t] >= series[t - 1] - eps {
            continue;
        }
        let target = series[t - 1];
        if let Some(r) = (t + 1..series.len()).find(|&r| series[r] >= target) {
            sum += (series[r] - series[t]) / (r - t) as f64;
            skip_until = r;
        }
    }
    sum
}

fn floyd_warshall(adj: &[Vec<bool>]) -> Vec<Vec<Option<usize>>> {
    let k = adj.len();
    let mut d: Vec<Vec<Option<usize>>> = (0..k)
        .map(|u| {
            (0..k)
                .map(|v| if u == v { Some(0) } else if adj[u][v] { Some(1) } else { None })
                .collect()
        })
        .collect();
    #[allow(clippy::needless_range_loop)]
    for m in 0..k {
        for u in 0..k {
            let Some(um) = d[u][m] else { continue };
            for v in 0..k {
                if let Some(mv) = d[m][v] {
                    if d[u][v].map_or(true, |x| um + mv < x) {
                        d[u][v] = Some(um + mv);
                    }
                }
            }
        }
    }
    d
}

/// Hop distances between all node pairs; `None` when unreachable.
///
/// # Panics
///
/// When the graph has more than 200 nodes.
pub fn oracle_apsp(graph: &QuotientGraph) -> Vec<Vec<Option<usize>>> {
    let k = graph.node_count();
    assert!(k <= 200, "oracle_apsp is limited to 200 nodes");
    let mut adj = alloc::vec![alloc::vec![false; k]; k];
    for &(u, v) in graph.edges().keys() {
        adj[u.index()][v.index()] = true;
    }
    floyd_warshall(&adj)
}

/// Reference partition: the predicate on every pair, then connected
/// components by depth-first search. Canonical class index per turn.
///
/// # Panics
///
/// With more than 2000 turns.
pub fn oracle_merge(turns: &[&Turn], cfg: &SimilarityConfig) -> Result<Vec<usize>, SimilarityError> {
    assert!(turns.len() <= 2000, "oracle_merge is limited to 2000 turns");
    let emb: Vec<TurnEmbedding> = turns.iter().map(|t| TurnEmbedding::of(t, cfg)).collect();
    let n = emb.len();
    let mut neighbours = alloc::vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if emb[i].equivalent(&emb[j], cfg)? {
                neighbours[i].push(j);
                neighbours[j].push(i);
            }
        }
    }
    let mut label = alloc::vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let mut stack = alloc::vec![s];
        label[s] = next;
        while let Some(u) = stack.pop() {
            for &v in &neighbours[u] {
                if label[v] == usize::MAX {
                    label[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    Ok(label)
}

/// All turns of a task in (trajectory, turn) order.
pub fn pooled_turns(task: &Task) -> Vec<&Turn> {
    task.trajectories.iter().flat_map(|t| t.turns.iter()).collect()
}

/// Tool and result codes of class `k` over `dim` basis vectors. Distinct
/// classes differ in at least one code while `k < dim * dim`.
fn class_codes(k: usize, dim: usize) -> (usize, usize) {
    let a = k % dim;
    (a, (a + k / dim) % dim)
}

const WELL_SEPARATED_JITTER: f64 = 0.004;
/// Upper end of the per-turn noise energy `sigma^2 * dim` in marginal mode;
/// pairwise cosines then range over roughly [0.8, 1].
const MARGINAL_NOISE: f64 = 0.25;

fn embed(class: usize, mode: EmbeddingMode, dim: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = class_codes(class, dim);
    let mut tool = alloc::vec![0.0; dim];
    let mut result = alloc::vec![0.0; dim];
    tool[a] = 1.0;
    result[b] = 1.0;
    match mode {
        EmbeddingMode::WellSeparated => {
            for x in tool.iter_mut().chain(result.iter_mut()) {
                *x += rng.random_range(-WELL_SEPARATED_JITTER..=WELL_SEPARATED_JITTER);
            }
        }
        EmbeddingMode::Marginal => {
            for v in [&mut tool, &mut result] {
                let sigma = sqrt(rng.random::<f64>() * MARGINAL_NOISE / dim as f64);
                for x in v.iter_mut() {
                    *x += sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        EmbeddingMode::FeaturizedText => unreachable!("featurized turns carry no embeddings"),
    }
    (tool, result)
}

fn token(seed: u64, class: usize, salt: u64) -> String {
    let h = mix64(seed ^ mix64(class as u64 ^ (salt << 48)));
    format!("{h:016x}")
}

#[allow(clippy::too_many_arguments)]
fn render_turn(
    label: &str,
    class: usize,
    traj: usize,
    step: usize,
    mode: EmbeddingMode,
    dim: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Turn {
    let reasoning = format!("trajectory {traj}, step {step}");
    match mode {
        EmbeddingMode::FeaturizedText => {
            let mut args = Map::new();
            args.insert("ref".into(), Value::String(token(seed, class, 1)));
            Turn {
                reasoning,
                tool_name: format!("tool_{}", token(seed, class, 2)),
                tool_args: args,
                observation: format!("{} {} {}", token(seed, class, 3), label, token(seed, class, 4)),
                tool_embedding: None,
                result_embedding: None,
            }
        }
        _ => {
            let (tool, result) = embed(class, mode, dim, rng);
            let mut args = Map::new();
            args.insert("node".into(), Value::String(label.into()));
            Turn {
                reasoning,
                tool_name: "step".into(),
                tool_args: args,
                observation: format!("reached {label}"),
                tool_embedding: Some(tool),
                result_embedding: Some(result),
            }
        }
    }
}

fn render(plan: &TaskPlan, partition: &[usize], mode: EmbeddingMode, dim: usize, seed: u64) -> Vec<TrajectoryRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cursor = 0;
    plan.trajectories
        .iter()
        .enumerate()
        .map(|(ti, t)| {
            let turns = t
                .labels
                .iter()
                .enumerate()
                .map(|(step, label)| {
                    let class = partition[cursor];
                    cursor += 1;
                    render_turn(label, class, ti, step, mode, dim, seed, &mut rng)
                })
                .collect();
            TrajectoryRecord {
                task_id: plan.task_id.clone(),
                traj_id: t.traj_id.clone(),
                reward: i64::from(t.reward),
                intent: Some(format!("planted task {}", plan.task_id)),
                context: None,
                turns,
            }
        })
        .collect()
}

/// Shape of an unstructured random task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomTaskConfig {
    pub trajectories: usize,
    pub max_len: usize,
    pub classes: usize,
    pub mode: EmbeddingMode,
    pub dim: usize,
}

impl RandomTaskConfig {
    /// A random shape with at most `max_turns` turns in total.
    pub fn sample(seed: u64, max_turns: usize, mode: EmbeddingMode) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed));
        let trajectories = rng.random_range(2..=20usize.min(max_turns.max(2)));
        let max_len = (max_turns / trajectories).max(1);
        Self {
            trajectories,
            max_len: rng.random_range(1..=max_len),
            classes: rng.random_range(1..=60),
            mode,
            dim: 64,
        }
    }
}

/// Random walks over `classes` intended classes. Returns the task and the
/// intended class of every pooled turn.
pub fn random_task(seed: u64, cfg: &RandomTaskConfig) -> (Task, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = cfg.classes.max(1);
    let mut intended = Vec::new();
    let mut trajectories = Vec::with_capacity(cfg.trajectories);
    for ti in 0..cfg.trajectories {
        let len = rng.random_range(1..=cfg.max_len.max(1));
        let mut class = rng.random_range(0..classes);
        let mut turns = Vec::with_capacity(len);
        for step in 0..len {
            if step > 0 {
                class = if rng.random_bool(0.7) {
                    (class + rng.random_range(0..3)) % classes
                } else {
                    rng.random_range(0..classes)
                };
            }
            intended.push(class);
            let label = format!("c{class}");
            turns.push(render_turn(&label, class, ti, step, cfg.mode, cfg.dim, seed, &mut rng));
        }
        trajectories.push(Trajectory {
            traj_id: format!("r{ti:03}"),
            turns,
            reward: u8::from(rng.random_bool(0.5)),
        });
    }
    let task = Task {
        task_id: format!("random-{seed}"),
        intent: String::new(),
        context: String::new(),
        trajectories,
    };
    (task, crate::topology::canonical_partition(&intended))
}

/// A random graph with exactly `nodes` nodes (root included), built from
/// random walks that together visit every node.
pub fn random_graph(seed: u64, nodes: usize) -> QuotientGraph {
    assert!(nodes >= 2, "a graph needs the root and one node");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (1..nodes).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut paths = Vec::new();
    let mut rest = &order[..];
    while !rest.is_empty() {
        let take = rng.random_range(1..=rest.len().min(8));
        let mut walk: Vec<NodeId> = alloc::vec![NodeId::ROOT];
        for &v in &rest[..take] {
            walk.push(NodeId(v));
            // Occasional detours to already used nodes add cycles and shortcuts.
            if rng.random_bool(0.3) {
                walk.push(NodeId(rng.random_range(1..nodes)));
            }
        }
        rest = &rest[take..];
        paths.push(TrajectoryPath {
            traj_id: format!("g{:03}", paths.len()),
            nodes: walk,
            reward: u8::from(rng.random_bool(0.5)),
        });
    }
    QuotientGraph::from_paths(format!("graph-{seed}"), nodes, paths, PhiConfig::default())
        .expect("random walks cover every node")
}

/// A stable 64-bit fingerprint of a string, for deriving sub-seeds.
pub fn seed_of(text: &str) -> u64 {
    mix64(fnv1a(text.as_bytes()))
}
