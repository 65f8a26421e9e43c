//! Per-task quotient graphs.
//!
//! All turns of a task are pooled, equivalent pairs are found (all pairs or
//! LSH candidates, always verified with the exact predicate) and classes are
//! the connected components of the verified pairs. Each class becomes a node;
//! a virtual root precedes the first turn of every trajectory. Edges count
//! observed transitions, including self-loops from consecutive turns that
//! fall in the same class, so the graph is a general directed multigraph.
//!
//! The success potential of a node is the fraction of the trajectories
//! visiting it that succeed. Visits are counted once per trajectory unless
//! [`VisitCounting::Step`] is selected.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::corpus::{Task, Trajectory};
use crate::similarity::{lsh_candidates, LshConfig, SimilarityConfig, SimilarityError, TurnEmbedding};
use crate::unionfind::UnionFind;

/// Dense node index; `NodeId::ROOT` is the virtual root.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }

    pub fn is_root(self) -> bool {
        self == Self::ROOT
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    #[default]
    Exact,
    Lsh,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VisitCounting {
    /// A trajectory counts at most once per node.
    #[default]
    Trajectory,
    /// Every occurrence counts.
    Step,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhiConfig {
    /// Laplace add-k pseudo-count; 0 gives the maximum-likelihood estimate.
    pub smoothing: f64,
    pub counting: VisitCounting,
}

impl Default for PhiConfig {
    fn default() -> Self {
        Self {
            smoothing: 0.0,
            counting: VisitCounting::Trajectory,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub similarity: SimilarityConfig,
    pub mode: MergeMode,
    pub lsh: LshConfig,
    /// Scale of the tool and result views in the joint LSH space.
    pub view_weights: [f64; 2],
    pub phi: PhiConfig,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            similarity: SimilarityConfig::default(),
            mode: MergeMode::Exact,
            lsh: LshConfig::default(),
            view_weights: [1.0, 1.0],
            phi: PhiConfig::default(),
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.similarity.validate()?;
        self.lsh.validate()?;
        if self.view_weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || self.view_weights.iter().all(|w| *w == 0.0)
        {
            return Err(ConfigError::new("view_weights", "must be finite, non-negative and not both zero"));
        }
        if !self.phi.smoothing.is_finite() || self.phi.smoothing < 0.0 {
            return Err(ConfigError::new("phi.smoothing", "must be a finite value >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TopologyError {
    EmptyTask(String),
    Similarity(SimilarityError),
    Config(ConfigError),
    UnknownTrajectory(String),
    /// The trajectory exists but its turn count differs from the graph's.
    TrajectoryMismatch { traj_id: String, expected: usize, found: usize },
    UnvisitedNode(NodeId),
    InvalidGraph(String),
}

impl fmt::Display for TopologyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyError::EmptyTask(id) => write!(f, "task `{id}` has no trajectories"),
            TopologyError::Similarity(e) => write!(f, "similarity: {e}"),
            TopologyError::Config(e) => e.fmt(f),
            TopologyError::UnknownTrajectory(id) => write!(f, "trajectory `{id}` is not part of this graph"),
            TopologyError::TrajectoryMismatch { traj_id, expected, found } => write!(
                f,
                "trajectory `{traj_id}` has {found} turns but the graph recorded {expected}"
            ),
            TopologyError::UnvisitedNode(v) => write!(f, "node {v} is not visited by any trajectory"),
            TopologyError::InvalidGraph(msg) => write!(f, "invalid graph: {msg}"),
        }
    }
}

impl From<SimilarityError> for TopologyError {
    fn from(e: SimilarityError) -> Self {
        TopologyError::Similarity(e)
    }
}

impl From<ConfigError> for TopologyError {
    fn from(e: ConfigError) -> Self {
        TopologyError::Config(e)
    }
}

/// A trajectory projected onto the graph: root first, then one node per turn.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryPath {
    pub traj_id: String,
    pub nodes: Vec<NodeId>,
    pub reward: u8,
}

impl TrajectoryPath {
    pub fn succeeded(&self) -> bool {
        self.reward == 1
    }

    pub fn turn_count(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }
}

/// Position of a turn within a task: trajectory index, then turn index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TurnRef {
    pub trajectory: usize,
    pub turn: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub turns: usize,
    pub candidate_pairs: u64,
    /// Unions that joined two previously separate classes.
    pub merges: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuotientGraph {
    task_id: String,
    paths: Vec<TrajectoryPath>,
    path_index: BTreeMap<String, usize>,
    members: Vec<Vec<TurnRef>>,
    edges: BTreeMap<(NodeId, NodeId), u64>,
    successors: Vec<Vec<NodeId>>,
    visits: Vec<u64>,
    successes: Vec<u64>,
    phi: Vec<f64>,
    phi_config: PhiConfig,
    stats: BuildStats,
}

/// Builds the quotient graph of one task.
pub fn build_quotient_graph(task: &Task, cfg: &TopologyConfig) -> Result<QuotientGraph, TopologyError> {
    cfg.validate()?;
    if task.trajectories.is_empty() {
        return Err(TopologyError::EmptyTask(task.task_id.clone()));
    }

    let mut embeddings = Vec::with_capacity(task.turn_count());
    for traj in &task.trajectories {
        for turn in &traj.turns {
            embeddings.push(TurnEmbedding::of(turn, &cfg.similarity));
        }
    }
    let n = embeddings.len();
    let mut uf = UnionFind::new(n);
    let mut stats = BuildStats {
        turns: n,
        ..BuildStats::default()
    };

    match cfg.mode {
        MergeMode::Exact => {
            stats.candidate_pairs = (n as u64) * (n as u64).saturating_sub(1) / 2;
            for i in 0..n {
                for j in i + 1..n {
                    // Verifying a pair already inside one class cannot change the components.
                    if uf.connected(i, j) {
                        continue;
                    }
                    if embeddings[i].equivalent(&embeddings[j], &cfg.similarity)? {
                        uf.union(i, j);
                        stats.merges += 1;
                    }
                }
            }
        }
        MergeMode::Lsh => {
            let candidates = lsh_candidates(&embeddings, cfg.view_weights, &cfg.lsh)?;
            stats.candidate_pairs = candidates.len() as u64;
            for (i, j) in candidates {
                if uf.connected(i, j) {
                    continue;
                }
                if embeddings[i].equivalent(&embeddings[j], &cfg.similarity)? {
                    uf.union(i, j);
                    stats.merges += 1;
                }
            }
        }
    }

    // Number classes by their smallest member; turns are visited in that order.
    let mut class_of_root = BTreeMap::new();
    let mut node_of_turn = Vec::with_capacity(n);
    for i in 0..n {
        let root = uf.find(i);
        let next = class_of_root.len() + 1;
        let id = *class_of_root.entry(root).or_insert(next);
        node_of_turn.push(NodeId(id));
    }
    let node_count = class_of_root.len() + 1;

    let mut paths = Vec::with_capacity(task.trajectories.len());
    let mut cursor = 0;
    for traj in &task.trajectories {
        let mut nodes = Vec::with_capacity(traj.turns.len() + 1);
        nodes.push(NodeId::ROOT);
        nodes.extend_from_slice(&node_of_turn[cursor..cursor + traj.turns.len()]);
        cursor += traj.turns.len();
        paths.push(TrajectoryPath {
            traj_id: traj.traj_id.clone(),
            nodes,
            reward: traj.reward,
        });
    }

    let mut graph = QuotientGraph::from_paths(task.task_id.clone(), node_count, paths, cfg.phi)?;
    graph.stats = stats;
    Ok(graph)
}

impl QuotientGraph {
    /// Assembles a graph from projected paths; edges, visit counts and the
    /// potential are all derived from them.
    pub fn from_paths(
        task_id: String,
        node_count: usize,
        paths: Vec<TrajectoryPath>,
        phi_config: PhiConfig,
    ) -> Result<Self, TopologyError> {
        if paths.is_empty() {
            return Err(TopologyError::EmptyTask(task_id));
        }
        let invalid = |msg: String| Err(TopologyError::InvalidGraph(msg));
        let mut members = alloc::vec![Vec::new(); node_count];
        let mut edges = BTreeMap::new();
        let mut visits = alloc::vec![0u64; node_count];
        let mut successes = alloc::vec![0u64; node_count];
        let mut step_visits = alloc::vec![0u64; node_count];
        let mut step_successes = alloc::vec![0u64; node_count];
        let mut path_index = BTreeMap::new();
        let mut last_seen = alloc::vec![usize::MAX; node_count];

        for (ti, path) in paths.iter().enumerate() {
            if path.nodes.len() < 2 || path.nodes[0] != NodeId::ROOT {
                return invalid(format!("path `{}` must start at the root and have a turn", path.traj_id));
            }
            if path.reward > 1 {
                return invalid(format!("path `{}` has reward {}", path.traj_id, path.reward));
            }
            if path_index.insert(path.traj_id.clone(), ti).is_some() {
                return invalid(format!("duplicate path `{}`", path.traj_id));
            }
            for (pos, &v) in path.nodes.iter().enumerate() {
                if v.0 >= node_count {
                    return invalid(format!("path `{}` references node {v} of {node_count}", path.traj_id));
                }
                if pos > 0 {
                    if v.is_root() {
                        return invalid(format!("path `{}` revisits the root", path.traj_id));
                    }
                    members[v.0].push(TurnRef { trajectory: ti, turn: pos - 1 });
                    *edges.entry((path.nodes[pos - 1], v)).or_insert(0) += 1;
                }
                step_visits[v.0] += 1;
                step_successes[v.0] += u64::from(path.reward);
                if last_seen[v.0] != ti {
                    last_seen[v.0] = ti;
                    visits[v.0] += 1;
                    successes[v.0] += u64::from(path.reward);
                }
            }
        }
        if let Some(v) = (1..node_count).find(|&v| members[v].is_empty()) {
            return invalid(format!("node {v} has no member turn"));
        }

        let mut successors = alloc::vec![Vec::new(); node_count];
        for &(u, v) in edges.keys() {
            successors[u.0].push(v);
        }

        let (n, s) = match phi_config.counting {
            VisitCounting::Trajectory => (&visits, &successes),
            VisitCounting::Step => (&step_visits, &step_successes),
        };
        let k = phi_config.smoothing;
        let phi = n
            .iter()
            .zip(s)
            .map(|(&n, &s)| (s as f64 + k) / (n as f64 + 2.0 * k))
            .collect();

        Ok(Self {
            task_id,
            paths,
            path_index,
            members,
            edges,
            successors,
            visits,
            successes,
            phi,
            phi_config,
            stats: BuildStats::default(),
        })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    /// Including the root.
    pub fn node_count(&self) -> usize {
        self.members.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count()).map(NodeId)
    }

    pub fn members(&self, v: NodeId) -> &[TurnRef] {
        &self.members[v.0]
    }

    pub fn edges(&self) -> &BTreeMap<(NodeId, NodeId), u64> {
        &self.edges
    }

    pub fn edge_count(&self, u: NodeId, v: NodeId) -> u64 {
        self.edges.get(&(u, v)).copied().unwrap_or(0)
    }

    /// Distinct successors, self-loops included, ascending.
    pub fn successors(&self, v: NodeId) -> &[NodeId] {
        &self.successors[v.0]
    }

    /// Distinct successors other than `v` itself.
    pub fn children(&self, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.successors[v.0].iter().copied().filter(move |&u| u != v)
    }

    pub fn phi(&self, v: NodeId) -> f64 {
        self.phi[v.0]
    }

    pub fn phi_values(&self) -> &[f64] {
        &self.phi
    }

    pub fn phi_config(&self) -> PhiConfig {
        self.phi_config
    }

    /// Distinct trajectories visiting `v`.
    pub fn visits(&self, v: NodeId) -> u64 {
        self.visits[v.0]
    }

    /// Distinct successful trajectories visiting `v`.
    pub fn successes(&self, v: NodeId) -> u64 {
        self.successes[v.0]
    }

    pub fn trajectory_count(&self) -> usize {
        self.paths.len()
    }

    pub fn success_count(&self) -> usize {
        self.paths.iter().filter(|p| p.succeeded()).count()
    }

    pub fn pass_rate(&self) -> f64 {
        self.success_count() as f64 / self.paths.len() as f64
    }

    pub fn paths(&self) -> &[TrajectoryPath] {
        &self.paths
    }

    pub fn path(&self, traj_id: &str) -> Option<&TrajectoryPath> {
        self.path_index.get(traj_id).map(|&i| &self.paths[i])
    }

    pub fn stats(&self) -> BuildStats {
        self.stats
    }

    pub fn set_stats(&mut self, stats: BuildStats) {
        self.stats = stats;
    }

    /// Projection of a trajectory of this task through the quotient map.
    pub fn project(&self, traj: &Trajectory) -> Result<TrajectoryPath, TopologyError> {
        let path = self
            .path(&traj.traj_id)
            .ok_or_else(|| TopologyError::UnknownTrajectory(traj.traj_id.clone()))?;
        if path.turn_count() != traj.turns.len() {
            return Err(TopologyError::TrajectoryMismatch {
                traj_id: traj.traj_id.clone(),
                expected: path.turn_count(),
                found: traj.turns.len(),
            });
        }
        Ok(path.clone())
    }

    /// Hop distances from `u` to every node, `None` when unreachable.
    pub fn distances_from(&self, u: NodeId) -> Vec<Option<usize>> {
        let mut dist = alloc::vec![None; self.node_count()];
        if u.0 >= self.node_count() {
            return dist;
        }
        dist[u.0] = Some(0);
        let mut queue = VecDeque::from([u]);
        while let Some(x) = queue.pop_front() {
            let d = dist[x.0].unwrap_or(0) + 1;
            for &y in &self.successors[x.0] {
                if dist[y.0].is_none() {
                    dist[y.0] = Some(d);
                    queue.push_back(y);
                }
            }
        }
        dist
    }

    /// Minimum number of directed edges from `u` to `v`.
    pub fn geodesic(&self, u: NodeId, v: NodeId) -> Option<usize> {
        if v.0 >= self.node_count() {
            return None;
        }
        self.distances_from(u)[v.0]
    }

    /// Share of the task's trajectories that visit `v`.
    pub fn popularity(&self, v: NodeId) -> Result<f64, TopologyError> {
        match self.visits.get(v.0) {
            Some(&n) if n > 0 => Ok(n as f64 / self.paths.len() as f64),
            _ => Err(TopologyError::UnvisitedNode(v)),
        }
    }

    /// First member turn, used as the node's display sample.
    pub fn sample_turn(&self, v: NodeId) -> Option<TurnRef> {
        self.members.get(v.0).and_then(|m| m.first().copied())
    }
}

impl fmt::Display for QuotientGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "task {} ({} nodes, {} edges, {} trajectories)",
            self.task_id,
            self.node_count(),
            self.edges.len(),
            self.paths.len()
        )
    }
}

/// Canonical form of a partition: turn `i` gets the index of its class, with
/// classes numbered by first appearance.
pub fn canonical_partition(labels: &[usize]) -> Vec<usize> {
    let mut renumber = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = renumber.len();
            *renumber.entry(l).or_insert(next)
        })
        .collect()
}

impl QuotientGraph {
    /// Class label per turn in flattened (trajectory, turn) order.
    pub fn partition(&self) -> Vec<usize> {
        let labels: Vec<usize> = self
            .paths
            .iter()
            .flat_map(|p| p.nodes[1..].iter().map(|v| v.0))
            .collect();
        canonical_partition(&labels)
    }
}
