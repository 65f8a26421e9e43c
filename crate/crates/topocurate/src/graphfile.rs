//! Per-task graph dumps.
//!
//! A graph directory holds `index.json` plus one `task-NNNNN.json` per task
//! (and optionally `task-NNNNN.dot`). Each dump carries the projected paths,
//! from which the graph is rebuilt on load; the node and edge tables are
//! checked against the rebuilt graph so hand-edited files are caught.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use topocurate_core::corpus::canonicalize_action;
use topocurate_core::topology::BuildStats;
use topocurate_core::{NodeId, QuotientGraph, Task, TopologyConfig, TrajectoryPath};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json, write_text};

pub const GRAPH_SCHEMA: &str = "topocurate-graph/1";
pub const INDEX_SCHEMA: &str = "topocurate-graph-index/1";
pub const INDEX_FILE: &str = "index.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub phi: f64,
    pub visits: u64,
    pub successes: u64,
    /// Canonical action of the first member turn; absent for the root.
    pub sample_action: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: usize,
    pub dst: usize,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub schema: String,
    pub task_id: String,
    pub config: TopologyConfig,
    pub stats: BuildStats,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    pub paths: Vec<TrajectoryPath>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub task_id: String,
    pub file: String,
    /// Non-root nodes.
    pub nodes: usize,
    pub edges: usize,
    pub turns: usize,
    pub candidate_pairs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexFile {
    pub schema: String,
    pub config: TopologyConfig,
    pub tasks: Vec<IndexEntry>,
}

impl GraphFile {
    pub fn new(graph: &QuotientGraph, task: &Task, config: &TopologyConfig) -> Self {
        let nodes = graph
            .nodes()
            .map(|v| NodeRecord {
                id: v.index(),
                phi: graph.phi(v),
                visits: graph.visits(v),
                successes: graph.successes(v),
                sample_action: graph
                    .sample_turn(v)
                    .filter(|_| !v.is_root())
                    .map(|r| canonicalize_action(&task.trajectories[r.trajectory].turns[r.turn])),
            })
            .collect();
        let edges = graph
            .edges()
            .iter()
            .map(|(&(u, v), &count)| EdgeRecord {
                src: u.index(),
                dst: v.index(),
                count,
            })
            .collect();
        Self {
            schema: GRAPH_SCHEMA.into(),
            task_id: graph.task_id().into(),
            config: *config,
            stats: graph.stats(),
            nodes,
            edges,
            paths: graph.paths().to_vec(),
        }
    }

    /// Rebuilds the graph and checks the stored tables against it.
    pub fn to_graph(&self) -> Result<QuotientGraph> {
        if self.schema != GRAPH_SCHEMA {
            return Err(Error::input(format!(
                "graph `{}`: unsupported schema `{}`",
                self.task_id, self.schema
            )));
        }
        let mut graph =
            QuotientGraph::from_paths(self.task_id.clone(), self.nodes.len(), self.paths.clone(), self.config.phi)
                .map_err(|e| Error::input(format!("graph `{}`: {e}", self.task_id)))?;
        graph.set_stats(self.stats);
        let consistent = self.nodes.iter().enumerate().all(|(i, n)| {
            let v = NodeId(i);
            n.id == i && n.phi == graph.phi(v) && n.visits == graph.visits(v) && n.successes == graph.successes(v)
        }) && self.edges.len() == graph.edges().len()
            && self
                .edges
                .iter()
                .all(|e| graph.edge_count(NodeId(e.src), NodeId(e.dst)) == e.count);
        if !consistent {
            return Err(Error::input(format!(
                "graph `{}`: node or edge table disagrees with its paths",
                self.task_id
            )));
        }
        Ok(graph)
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Nodes labelled with potential and visit count; edges with transition counts.
pub fn to_dot(file: &GraphFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", dot_escape(&file.task_id));
    let _ = writeln!(out, "  node [shape=box];");
    for n in &file.nodes {
        let name = match &n.sample_action {
            None => "ROOT".to_string(),
            Some(a) if a.chars().count() > 40 => format!("{}...", a.chars().take(40).collect::<String>()),
            Some(a) => a.clone(),
        };
        let _ = writeln!(
            out,
            "  n{} [label=\"{}\\nphi={:.3} visits={}\"];",
            n.id,
            dot_escape(&name),
            n.phi,
            n.visits
        );
    }
    for e in &file.edges {
        let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", e.src, e.dst, e.count);
    }
    out.push_str("}\n");
    out
}

fn task_file(i: usize) -> String {
    format!("task-{i:05}.json")
}

/// Writes every dump, then the index.
pub fn write_dir(dir: &Path, config: &TopologyConfig, files: &[GraphFile], dot: bool) -> Result<()> {
    let mut tasks = Vec::with_capacity(files.len());
    for (i, f) in files.iter().enumerate() {
        let name = task_file(i);
        let path = dir.join(&name);
        write_json(&path, f)?;
        if dot {
            write_text(&path.with_extension("dot"), &to_dot(f))?;
        }
        tasks.push(IndexEntry {
            task_id: f.task_id.clone(),
            file: name,
            nodes: f.nodes.len() - 1,
            edges: f.edges.len(),
            turns: f.stats.turns,
            candidate_pairs: f.stats.candidate_pairs,
        });
    }
    write_json(
        &dir.join(INDEX_FILE),
        &IndexFile {
            schema: INDEX_SCHEMA.into(),
            config: *config,
            tasks,
        },
    )
}

pub fn read_index(dir: &Path) -> Result<IndexFile> {
    let index: IndexFile = read_json(&dir.join(INDEX_FILE))?;
    if index.schema != INDEX_SCHEMA {
        return Err(Error::input(format!(
            "{}: unsupported schema `{}`",
            dir.join(INDEX_FILE).display(),
            index.schema
        )));
    }
    Ok(index)
}

/// Paths of every dump listed in the index, in index order.
pub fn listed_files(dir: &Path, index: &IndexFile) -> Result<Vec<PathBuf>> {
    index
        .tasks
        .iter()
        .map(|t| {
            if t.file.contains(['/', '\\']) || t.file.starts_with('.') {
                return Err(Error::input(format!("index entry `{}` is not a plain file name", t.file)));
            }
            let path = dir.join(&t.file);
            if path.is_file() {
                Ok(path)
            } else {
                Err(Error::input(format!("missing graph file {}", path.display())))
            }
        })
        .collect()
}

pub fn read_graph(path: &Path) -> Result<(GraphFile, QuotientGraph)> {
    let file: GraphFile = read_json(path)?;
    let graph = file.to_graph()?;
    Ok((file, graph))
}
