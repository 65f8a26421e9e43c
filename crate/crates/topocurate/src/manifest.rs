//! Selection manifests.

use serde::{Deserialize, Serialize};
use topocurate_core::selector::{Excluded, Picked, Selection};
use topocurate_core::SelectionConfig;

pub const SELECTION_SCHEMA: &str = "topocurate-selection/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Sft,
    Rl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub kind: Kind,
    pub config: SelectionConfig,
    pub selected: Vec<Picked>,
    pub shortfall: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded: Option<Vec<Excluded>>,
}

impl Manifest {
    pub fn new(kind: Kind, config: SelectionConfig, selection: Selection, explain: bool) -> Self {
        Self {
            schema: SELECTION_SCHEMA.into(),
            kind,
            config,
            selected: selection.selected,
            shortfall: selection.shortfall,
            excluded: explain.then_some(selection.excluded),
        }
    }
}
