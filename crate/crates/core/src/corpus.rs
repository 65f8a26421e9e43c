//! Trajectory data model, validation and action canonicalization.
//!
//! A [`Corpus`] is built record by record through a [`CorpusBuilder`], which
//! rejects malformed records instead of repairing them. Task order and
//! trajectory order follow the order in which records were pushed.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// One interaction step: reasoning, tool action and environment observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub reasoning: String,
    pub tool_name: String,
    pub tool_args: Map<String, Value>,
    pub observation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_embedding: Option<Vec<f64>>,
}

/// One rollout of a task with its binary outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub traj_id: String,
    pub turns: Vec<Turn>,
    /// 0 or 1; enforced by [`CorpusBuilder`].
    pub reward: u8,
}

impl Trajectory {
    pub fn succeeded(&self) -> bool {
        self.reward == 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub task_id: String,
    pub intent: String,
    /// Carried as metadata; never consulted for equivalence.
    pub context: String,
    pub trajectories: Vec<Trajectory>,
}

impl Task {
    pub fn success_count(&self) -> usize {
        self.trajectories.iter().filter(|t| t.succeeded()).count()
    }

    /// Fraction of trajectories with reward 1.
    pub fn pass_rate(&self) -> f64 {
        if self.trajectories.is_empty() {
            return 0.0;
        }
        self.success_count() as f64 / self.trajectories.len() as f64
    }

    pub fn trajectory(&self, traj_id: &str) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.traj_id == traj_id)
    }

    pub fn turn_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.turns.len()).sum()
    }
}

/// Embedding dimension per view, `None` when the view is absent corpus-wide.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingDims {
    pub tool: Option<usize>,
    pub result: Option<usize>,
}

/// Wire form of one trajectory (one JSONL line).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub task_id: String,
    pub traj_id: String,
    /// Kept signed so out-of-domain values surface as validation errors.
    pub reward: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub turns: Vec<Turn>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CorpusError {
    Schema { line: usize, message: String },
    Dimension { line: usize, message: String },
    DuplicateId { line: usize, task_id: String, traj_id: String },
    UnknownTask(String),
}

impl fmt::Display for CorpusError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusError::Schema { line, message } => write!(f, "line {line}: schema error: {message}"),
            CorpusError::Dimension { line, message } => {
                write!(f, "line {line}: embedding dimension error: {message}")
            }
            CorpusError::DuplicateId { line, task_id, traj_id } => write!(
                f,
                "line {line}: duplicate trajectory id `{traj_id}` in task `{task_id}`"
            ),
            CorpusError::UnknownTask(id) => write!(f, "unknown task `{id}`"),
        }
    }
}

/// Validated, immutable collection of tasks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    tasks: Vec<Task>,
    index: BTreeMap<String, usize>,
    dims: EmbeddingDims,
}

impl Corpus {
    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, task_id: &str) -> Option<&Task> {
        self.index.get(task_id).map(|&i| &self.tasks[i])
    }

    pub fn embedding_dims(&self) -> EmbeddingDims {
        self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn trajectory_count(&self) -> usize {
        self.tasks.iter().map(|t| t.trajectories.len()).sum()
    }

    pub fn pass_rate(&self, task_id: &str) -> Result<f64, CorpusError> {
        self.task(task_id)
            .map(Task::pass_rate)
            .ok_or_else(|| CorpusError::UnknownTask(task_id.to_string()))
    }

    /// Wire records grouped by task, in corpus order. Loading these records
    /// again yields an identical corpus.
    pub fn to_records(&self) -> Vec<TrajectoryRecord> {
        let mut out = Vec::with_capacity(self.trajectory_count());
        for task in &self.tasks {
            for traj in &task.trajectories {
                out.push(TrajectoryRecord {
                    task_id: task.task_id.clone(),
                    traj_id: traj.traj_id.clone(),
                    reward: i64::from(traj.reward),
                    intent: Some(task.intent.clone()),
                    context: Some(task.context.clone()),
                    turns: traj.turns.clone(),
                });
            }
        }
        out
    }
}

/// Incremental, strict corpus construction.
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    tasks: Vec<Task>,
    index: BTreeMap<String, usize>,
    seen: BTreeSet<(String, String)>,
    /// Presence and dimension per view, fixed by the first turn seen.
    views: Option<EmbeddingDims>,
}

impl CorpusBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates and appends one record. On error the builder is unchanged,
    /// so callers may drop the record and continue.
    pub fn push(&mut self, line: usize, record: TrajectoryRecord) -> Result<(), CorpusError> {
        let views = self.validate(line, &record)?;
        self.views = Some(views);
        self.seen
            .insert((record.task_id.clone(), record.traj_id.clone()));

        let traj = Trajectory {
            traj_id: record.traj_id,
            turns: record.turns,
            reward: record.reward as u8,
        };
        match self.index.get(&record.task_id) {
            Some(&i) => {
                let task = &mut self.tasks[i];
                if task.intent.is_empty() {
                    task.intent = record.intent.unwrap_or_default();
                }
                if task.context.is_empty() {
                    task.context = record.context.unwrap_or_default();
                }
                task.trajectories.push(traj);
            }
            None => {
                self.index.insert(record.task_id.clone(), self.tasks.len());
                self.tasks.push(Task {
                    task_id: record.task_id,
                    intent: record.intent.unwrap_or_default(),
                    context: record.context.unwrap_or_default(),
                    trajectories: alloc::vec![traj],
                });
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Corpus {
        Corpus {
            tasks: self.tasks,
            index: self.index,
            dims: self.views.unwrap_or_default(),
        }
    }

    fn validate(&self, line: usize, rec: &TrajectoryRecord) -> Result<EmbeddingDims, CorpusError> {
        let schema = |message: String| CorpusError::Schema { line, message };
        if rec.task_id.is_empty() {
            return Err(schema("`task_id` must be non-empty".into()));
        }
        if rec.traj_id.is_empty() {
            return Err(schema("`traj_id` must be non-empty".into()));
        }
        if rec.reward != 0 && rec.reward != 1 {
            return Err(schema(format!("`reward` must be 0 or 1, got {}", rec.reward)));
        }
        if rec.turns.is_empty() {
            return Err(schema("`turns` must contain at least one turn".into()));
        }
        if self
            .seen
            .contains(&(rec.task_id.clone(), rec.traj_id.clone()))
        {
            return Err(CorpusError::DuplicateId {
                line,
                task_id: rec.task_id.clone(),
                traj_id: rec.traj_id.clone(),
            });
        }

        let mut views = self.views;
        for (i, turn) in rec.turns.iter().enumerate() {
            if turn.tool_name.is_empty() {
                return Err(schema(format!("turn {i}: `tool_name` must be non-empty")));
            }
            let tool = check_embedding(line, i, "tool_embedding", turn.tool_embedding.as_deref())?;
            let result = check_embedding(line, i, "result_embedding", turn.result_embedding.as_deref())?;
            let here = EmbeddingDims { tool, result };
            match views {
                None => views = Some(here),
                Some(expected) => {
                    check_view(line, i, "tool_embedding", expected.tool, tool)?;
                    check_view(line, i, "result_embedding", expected.result, result)?;
                }
            }
        }
        Ok(views.unwrap_or_default())
    }
}

fn check_embedding(
    line: usize,
    turn: usize,
    field: &str,
    emb: Option<&[f64]>,
) -> Result<Option<usize>, CorpusError> {
    match emb {
        None => Ok(None),
        Some([]) => Err(CorpusError::Schema {
            line,
            message: format!("turn {turn}: `{field}` must be non-empty when present"),
        }),
        Some(v) if v.iter().any(|x| !x.is_finite()) => Err(CorpusError::Schema {
            line,
            message: format!("turn {turn}: `{field}` contains a non-finite value"),
        }),
        Some(v) => Ok(Some(v.len())),
    }
}

fn check_view(
    line: usize,
    turn: usize,
    field: &str,
    expected: Option<usize>,
    found: Option<usize>,
) -> Result<(), CorpusError> {
    if expected == found {
        return Ok(());
    }
    let describe = |d: Option<usize>| match d {
        Some(n) => format!("dimension {n}"),
        None => "absent".to_string(),
    };
    Err(CorpusError::Dimension {
        line,
        message: format!(
            "turn {turn}: `{field}` is {} but the corpus has it {}",
            describe(found),
            describe(expected)
        ),
    })
}

/// Tool name followed by the arguments as canonical JSON: object keys sorted
/// at every depth, no whitespace, numbers in shortest round-trip form with
/// integral floats written as integers.
pub fn canonicalize_action(turn: &Turn) -> String {
    let mut out = String::with_capacity(turn.tool_name.len() + 16);
    out.push_str(&turn.tool_name);
    write_object(&turn.tool_args, &mut out);
    out
}

/// Canonical JSON text for an arbitrary value, same rules as
/// [`canonicalize_action`].
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, &mut out);
    out
}

fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(n, out),
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => write_object(map, out),
    }
}

fn write_object(map: &Map<String, Value>, out: &mut String) {
    let mut keys: Vec<&String> = map.keys().collect();
    keys.sort_unstable();
    out.push('{');
    for (i, key) in keys.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_string(key, out);
        out.push(':');
        write_value(&map[key.as_str()], out);
    }
    out.push('}');
}

const MAX_EXACT_INT: f64 = 9_007_199_254_740_992.0; // 2^53

fn write_number(n: &serde_json::Number, out: &mut String) {
    if let Some(i) = n.as_i64() {
        let _ = write!(out, "{i}");
    } else if let Some(u) = n.as_u64() {
        let _ = write!(out, "{u}");
    } else if let Some(f) = n.as_f64() {
        if f == libm::trunc(f) && libm::fabs(f) < MAX_EXACT_INT {
            let _ = write!(out, "{}", f as i64);
        } else if f != 0.0 && (libm::fabs(f) >= 1e21 || libm::fabs(f) < 1e-6) {
            // Both Display and LowerExp print the shortest round-trip digits.
            let _ = write!(out, "{f:e}");
        } else {
            let _ = write!(out, "{f}");
        }
    }
}

fn write_string(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '\u{08}' => out.push_str("\\b"),
            '\u{0c}' => out.push_str("\\f"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}
