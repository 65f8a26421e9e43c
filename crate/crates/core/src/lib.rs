//! Quotient-topology curation for multi-rollout tool-use agent trajectories.
//!
//! Rollouts of the same task are merged into a per-task quotient graph whose
//! nodes are classes of semantically equivalent turns (same tool action, same
//! environment response). A success potential is estimated per node and the
//! graph is then used to score trajectories for supervised fine-tuning and
//! tasks for reinforcement learning.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, the CLI and
//! parallel orchestration live in the `topocurate` crate.
//!
//! Module map:
//!
//! - [`corpus`]: trajectory data model, validation, pass rates, action
//!   canonicalization.
//! - [`similarity`]: dual-view equivalence predicate, fallback featurizer and
//!   LSH candidate generation.
//! - [`topology`]: quotient graph construction, projection, geodesics.
//! - [`sft`]: trajectory-level scores and the tilted sampling weight.
//! - [`rl`]: task-level structural scores and the selection softmax.
//! - [`selector`]: budgeted selection of trajectories and tasks.
//! - [`testkit`]: planted corpora with ground truth, and brute-force oracles.

#![no_std]

extern crate alloc;

mod hash;
mod math;
mod unionfind;

pub mod config;
pub mod corpus;
pub mod rl;
pub mod selector;
pub mod sft;
pub mod similarity;
pub mod testkit;
pub mod topology;

pub use config::ConfigError;
pub use corpus::{Corpus, CorpusBuilder, CorpusError, Task, Trajectory, TrajectoryRecord, Turn};
pub use rl::{RlConfig, RlTaskScore};
pub use selector::{SelectionConfig, Strategy};
pub use sft::{SftConfig, SftScore, SftWeights};
pub use similarity::{LshConfig, SimilarityConfig};
pub use topology::{MergeMode, NodeId, QuotientGraph, TopologyConfig, TrajectoryPath};
