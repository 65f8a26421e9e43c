//! Corpus JSONL reading and writing, and small file helpers.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use topocurate_core::{Corpus, CorpusBuilder, CorpusError, TrajectoryRecord};

use crate::error::{Error, Result};

/// A rejected line, kept when invalid records are skipped.
#[derive(Clone, Debug, PartialEq)]
pub struct Skipped {
    pub line: usize,
    pub reason: String,
}

/// Reads a corpus, one trajectory per non-blank line.
///
/// With `skip_invalid`, malformed records are logged and dropped; otherwise
/// the first one aborts the load. An empty result is always an error.
pub fn load_corpus(path: &Path, skip_invalid: bool) -> Result<(Corpus, Vec<Skipped>)> {
    let file = File::open(path).map_err(|e| Error::read(path, e))?;
    let mut builder = CorpusBuilder::new();
    let mut skipped = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::read(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = serde_json::from_str::<TrajectoryRecord>(&line)
            .map_err(|e| CorpusError::Schema {
                line: line_no,
                message: e.to_string(),
            })
            .and_then(|record| builder.push(line_no, record));
        if let Err(e) = outcome {
            if !skip_invalid {
                return Err(Error::input(format!("{}: {e}", path.display())));
            }
            log::warn!("{}: skipping record: {e}", path.display());
            skipped.push(Skipped {
                line: line_no,
                reason: e.to_string(),
            });
        }
    }
    let corpus = builder.finish();
    if corpus.is_empty() {
        return Err(Error::input(format!("{}: corpus has no valid trajectories", path.display())));
    }
    Ok((corpus, skipped))
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    ensure_parent(path)?;
    let file = File::create(path).map_err(|e| Error::write(path, e))?;
    let mut out = BufWriter::new(file);
    for record in corpus.to_records() {
        let line = serde_json::to_string(&record).map_err(|e| Error::Internal(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::write(path, e))?;
    }
    out.flush().map_err(|e| Error::write(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::write(path, e))
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(parent) => fs::create_dir_all(parent).map_err(|e| Error::write(parent, e)),
        None => Ok(()),
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"task_id":"a","traj_id":"1","reward":1,"turns":[{"reasoning":"","tool_name":"t","tool_args":{},"observation":"ok"}]}"#;

    fn corpus_file(lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(&path, lines.join("\n")).unwrap();
        (dir, path)
    }

    #[test]
    fn blank_lines_are_ignored() {
        let (_d, path) = corpus_file(&[GOOD, "", "  "]);
        let (c, skipped) = load_corpus(&path, false).unwrap();
        assert_eq!(c.trajectory_count(), 1);
        assert!(skipped.is_empty());
    }

    #[test]
    fn schema_error_names_the_line() {
        let (_d, path) = corpus_file(&[GOOD, r#"{"task_id":"a","traj_id":"2","reward":1}"#]);
        let err = load_corpus(&path, false).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn skip_invalid_keeps_the_rest() {
        let bad_reward = GOOD.replace("\"reward\":1", "\"reward\":3").replace("\"1\"", "\"2\"");
        let (_d, path) = corpus_file(&[GOOD, "not json", &bad_reward, GOOD]);
        let (c, skipped) = load_corpus(&path, true).unwrap();
        assert_eq!(c.trajectory_count(), 1);
        assert_eq!(skipped.iter().map(|s| s.line).collect::<Vec<_>>(), [2, 3, 4]);
    }

    #[test]
    fn empty_corpus_is_an_input_error() {
        let (_d, path) = corpus_file(&[""]);
        assert_eq!(load_corpus(&path, false).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn missing_file_is_an_input_error() {
        let err = load_corpus(Path::new("/nonexistent/c.jsonl"), false).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn write_then_read_round_trips() {
        let (_d, path) = corpus_file(&[GOOD]);
        let (c, _) = load_corpus(&path, false).unwrap();
        let out = path.with_extension("out.jsonl");
        write_corpus(&out, &c).unwrap();
        assert_eq!(load_corpus(&out, false).unwrap().0, c);
    }
}
