//! Planted corpus generation for the `synth` subcommand.

use std::path::{Path, PathBuf};

use topocurate_core::testkit::{
    generate, DipEvent, ErrorBranch, GroundTruth, LoopInsertion, PlantedCorpusSpec, PlantedTaskRecipe,
};
use topocurate_core::Corpus;

use crate::error::{Error, Result};
use crate::io::{read_json, write_corpus, write_json};

/// `corpus.jsonl` -> `corpus.truth.json`, in the same directory.
pub fn truth_path(corpus: &Path) -> PathBuf {
    let stem = corpus.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    corpus.with_file_name(format!("{stem}.truth.json"))
}

/// Reads a spec as TOML when the extension says so, JSON otherwise.
pub fn load_spec(path: &Path) -> Result<PlantedCorpusSpec> {
    if path.extension().is_some_and(|e| e == "toml") {
        let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        toml::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
    } else {
        read_json(path)
    }
}

/// The built-in fixture set: solution-family case studies, a shortcut loop,
/// a dip gadget, error branches, and an easy multi-family task.
pub fn default_spec(seed: u64) -> PlantedCorpusSpec {
    let recipe = |id: &str| PlantedTaskRecipe {
        task_id: id.into(),
        ..Default::default()
    };
    PlantedCorpusSpec {
        tasks: vec![
            PlantedTaskRecipe {
                num_trajectories: 8,
                successes: 8,
                solution_families: 2,
                ..recipe("families-2")
            },
            PlantedTaskRecipe {
                num_trajectories: 8,
                successes: 8,
                solution_families: 4,
                ..recipe("families-4")
            },
            PlantedTaskRecipe {
                num_trajectories: 10,
                successes: 8,
                solution_families: 2,
                family_length: 3,
                loop_insertions: vec![
                    LoopInsertion { trajectory: 0, position: 1 },
                    LoopInsertion { trajectory: 3, position: 0 },
                ],
                ..recipe("easy-looped")
            },
            PlantedTaskRecipe {
                num_trajectories: 0,
                successes: 0,
                dip_recovery_events: vec![DipEvent {
                    lead_in: 1,
                    pre_level: 0.8,
                    dip_level: 0.3,
                }],
                ..recipe("dip")
            },
            PlantedTaskRecipe {
                num_trajectories: 4,
                successes: 2,
                error_branches: vec![ErrorBranch { children: 2, failing: 1 }],
                ..recipe("branch")
            },
            PlantedTaskRecipe {
                num_trajectories: 10,
                successes: 3,
                solution_families: 3,
                family_length: 3,
                error_branches: vec![
                    ErrorBranch { children: 3, failing: 2 },
                    ErrorBranch { children: 5, failing: 2 },
                ],
                ..recipe("hard")
            },
        ],
        seed,
        ..Default::default()
    }
}

pub fn run(spec: &PlantedCorpusSpec, out: &Path) -> Result<(Corpus, GroundTruth)> {
    let (corpus, truth) = generate(spec).map_err(|e| Error::input(e.to_string()))?;
    write_corpus(out, &corpus)?;
    write_json(&truth_path(out), &truth)?;
    Ok((corpus, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_name() {
        assert_eq!(truth_path(Path::new("out/c.jsonl")), Path::new("out/c.truth.json"));
        assert_eq!(truth_path(Path::new("c")), Path::new("c.truth.json"));
    }

    #[test]
    fn default_spec_generates() {
        let (corpus, truth) = generate(&default_spec(0)).unwrap();
        assert_eq!(corpus.tasks().len(), truth.tasks.len());
        assert_eq!(truth.task("families-2").unwrap().v_div, 0.25);
        assert_eq!(truth.task("families-4").unwrap().v_div, 0.5);
        assert!((truth.task("branch").unwrap().v_struct - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spec_files_in_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("s.json");
        write_json(&json, &default_spec(3)).unwrap();
        assert_eq!(load_spec(&json).unwrap(), default_spec(3));
        let toml_path = dir.path().join("s.toml");
        std::fs::write(
            &toml_path,
            "seed = 4\n[[tasks]]\ntask_id = \"a\"\nnum_trajectories = 8\nsuccesses = 8\nsolution_families = 2\n",
        )
        .unwrap();
        let spec = load_spec(&toml_path).unwrap();
        assert_eq!(spec.seed, 4);
        assert_eq!(spec.tasks[0].family_length, 2);
    }
}
