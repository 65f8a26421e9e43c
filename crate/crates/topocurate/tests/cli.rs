//! The command-line binary: exit codes, file formats and the documented examples.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn topocurate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topocurate")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = topocurate(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(args: &[&str]) -> i32 {
    topocurate(args).status.code().unwrap()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Built-in fixtures synthesized and built in exact mode.
    fn built() -> Self {
        let w = Self::new();
        ok(&["synth", "--out", &w.p("c.jsonl")]);
        ok(&["build", "--corpus", &w.p("c.jsonl"), "--out", &w.p("g")]);
        w
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn data_rows(csv: &Path) -> Vec<String> {
    std::fs::read_to_string(csv)
        .unwrap()
        .lines()
        .skip(2)
        .map(str::to_string)
        .collect()
}

#[test]
fn build_writes_one_graph_per_task() {
    let w = Work::new();
    ok(&["synth", "--out", &w.p("c.jsonl")]);
    ok(&["build", "--corpus", &w.p("c.jsonl"), "--out", &w.p("g"), "--dot"]);
    let index = json(&w.path("g/index.json"));
    let tasks = index["tasks"].as_array().unwrap();
    assert_eq!(tasks.len(), 6);
    for t in tasks {
        let file = t["file"].as_str().unwrap();
        assert!(w.path("g").join(file).is_file());
        assert!(w.path("g").join(file).with_extension("dot").is_file());
    }
}

#[test]
fn empty_corpus_exits_2() {
    let w = Work::new();
    std::fs::write(w.path("empty.jsonl"), "\n\n").unwrap();
    let out = topocurate(&["build", "--corpus", &w.p("empty.jsonl"), "--out", &w.p("g")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no valid trajectories"));
}

#[test]
fn malformed_records_abort_unless_skipped() {
    let w = Work::new();
    ok(&["synth", "--out", &w.p("c.jsonl")]);
    let mut text = std::fs::read_to_string(w.path("c.jsonl")).unwrap();
    text.push_str("{\"task_id\": \"x\"}\n");
    std::fs::write(w.path("bad.jsonl"), text).unwrap();
    assert_eq!(code(&["build", "--corpus", &w.p("bad.jsonl"), "--out", &w.p("g")]), 2);
    ok(&["build", "--corpus", &w.p("bad.jsonl"), "--out", &w.p("g"), "--skip-invalid"]);
    assert_eq!(json(&w.path("g/index.json"))["tasks"].as_array().unwrap().len(), 6);
}

#[test]
fn missing_graph_file_exits_2() {
    let w = Work::built();
    std::fs::remove_file(w.path("g/task-00002.json")).unwrap();
    assert_eq!(code(&["score-sft", "--graphs", &w.p("g"), "--out", &w.p("s.csv")]), 2);
    assert_eq!(code(&["score-rl", "--graphs", &w.p("g"), "--out", &w.p("r.csv")]), 2);
    assert_eq!(code(&["score-rl", "--graphs", &w.p("nowhere"), "--out", &w.p("r.csv")]), 2);
}

#[test]
fn bad_flags_and_config_exit_2() {
    let w = Work::built();
    let g = w.p("g");
    let out = w.p("s.csv");
    assert_eq!(code(&["score-sft", "--graphs", &g, "--out", &out, "--lambda", "1,2"]), 2);
    assert_eq!(code(&["score-rl", "--graphs", &g, "--out", &out, "--temperature", "0"]), 2);
    assert_eq!(code(&["score-rl", "--graphs", &g, "--out", &out, "--mode", "fuzzy"]), 2);
    std::fs::write(w.path("c.toml"), "[rl]\nalpha = -1.0\n").unwrap();
    assert_eq!(code(&["score-rl", "--graphs", &g, "--out", &out, "--config", &w.p("c.toml")]), 2);
    std::fs::write(w.path("c.toml"), "[nope]\n").unwrap();
    assert_eq!(code(&["score-rl", "--graphs", &g, "--out", &out, "--config", &w.p("c.toml")]), 2);
}

#[test]
fn corpus_cross_check_catches_other_corpora() {
    let w = Work::built();
    ok(&["score-sft", "--graphs", &w.p("g"), "--out", &w.p("s.csv"), "--corpus", &w.p("c.jsonl")]);
    std::fs::write(w.path("spec.toml"), "[[tasks]]\ntask_id = \"families-2\"\n").unwrap();
    ok(&["synth", "--spec", &w.p("spec.toml"), "--out", &w.p("other.jsonl")]);
    let args = ["score-sft", "--graphs", &w.p("g"), "--out", &w.p("s.csv"), "--corpus", &w.p("other.jsonl")];
    assert_eq!(code(&args), 2);
}

#[test]
fn score_sft_echoes_lambda_and_reruns_identically() {
    let w = Work::built();
    ok(&["score-sft", "--graphs", &w.p("g"), "--out", &w.p("a.csv")]);
    ok(&["score-sft", "--graphs", &w.p("g"), "--out", &w.p("b.csv"), "--lambda", "0.4,0.3,0.3"]);
    let a = std::fs::read(w.path("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(w.path("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# lambda=0.4,0.3,0.3 (eff,rare,ref)"), "{text}");
    let mirror = json(&w.path("a.json"));
    assert_eq!(mirror["scores"].as_array().unwrap().len(), data_rows(&w.path("a.csv")).len());
}

#[test]
fn constant_pool_scores_zero() {
    let w = Work::new();
    let spec = "[[tasks]]\ntask_id = \"a\"\nnum_trajectories = 4\nsuccesses = 4\n\
                [[tasks]]\ntask_id = \"b\"\nnum_trajectories = 4\nsuccesses = 4\n";
    std::fs::write(w.path("spec.toml"), spec).unwrap();
    ok(&["synth", "--spec", &w.p("spec.toml"), "--out", &w.p("c.jsonl")]);
    ok(&["build", "--corpus", &w.p("c.jsonl"), "--out", &w.p("g")]);
    ok(&["score-sft", "--graphs", &w.p("g"), "--out", &w.p("s.csv")]);
    let rows = data_rows(&w.path("s.csv"));
    assert_eq!(rows.len(), 8);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!((cols[9], cols[10]), ("0.0", "1.0"), "{row}");
    }
}

#[test]
fn select_top_weight_is_sorted_and_budgeted() {
    let w = Work::built();
    ok(&["score-sft", "--graphs", &w.p("g"), "--out", &w.p("s.csv")]);
    ok(&["select", "--scores", &w.p("s.csv"), "--kind", "sft", "--budget", "5", "--out", &w.p("m.json")]);
    let m = json(&w.path("m.json"));
    assert_eq!(m["schema"], "topocurate-selection/1");
    assert_eq!(m["kind"], "sft");
    assert!(m.get("excluded").is_none());
    let sel = m["selected"].as_array().unwrap();
    assert_eq!(sel.len(), 5);
    let weights: Vec<f64> = sel.iter().map(|p| p["weight"].as_f64().unwrap()).collect();
    assert!(weights.windows(2).all(|x| x[0] >= x[1]), "{weights:?}");
}

#[test]
fn seeded_selection_repeats_and_explains() {
    let w = Work::built();
    ok(&["score-sft", "--graphs", &w.p("g"), "--out", &w.p("s.csv")]);
    for name in ["a.json", "b.json"] {
        ok(&[
            "select", "--scores", &w.p("s.csv"), "--kind", "sft", "--budget", "7", "--strategy", "seeded-sample",
            "--seed", "42", "--explain", "--out", &w.p(name),
        ]);
    }
    assert_eq!(std::fs::read(w.path("a.json")).unwrap(), std::fs::read(w.path("b.json")).unwrap());
    let m = json(&w.path("a.json"));
    let reasons: Vec<&str> = m["excluded"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["reason"].as_str().unwrap())
        .collect();
    assert!(reasons.contains(&"zero-weight"));
    assert!(reasons.contains(&"out-of-band"));
    assert!(reasons.contains(&"below-cut"));
}

#[test]
fn rl_selection_applies_default_band() {
    let w = Work::built();
    ok(&["score-rl", "--graphs", &w.p("g"), "--out", &w.p("r.csv")]);
    ok(&["select", "--scores", &w.p("r.csv"), "--kind", "rl", "--budget", "10", "--explain", "--out", &w.p("m.json")]);
    let m = json(&w.path("m.json"));
    let picked: Vec<&str> = m["selected"].as_array().unwrap().iter().map(|p| p["task_id"].as_str().unwrap()).collect();
    assert_eq!(picked.len(), 3);
    // easy-looped passes 0.8 of its rollouts.
    assert!(!picked.contains(&"easy-looped"));
    assert_eq!(m["shortfall"], 7);
    let out_of_band = m["excluded"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["task_id"] == "easy-looped")
        .unwrap();
    assert_eq!(out_of_band["reason"], "out-of-band");
}

#[test]
fn strict_selection_fails_on_short_pool() {
    let w = Work::built();
    ok(&["score-rl", "--graphs", &w.p("g"), "--out", &w.p("r.csv")]);
    let args = ["select", "--scores", &w.p("r.csv"), "--kind", "rl", "--budget", "10", "--strict", "--out", &w.p("m.json")];
    assert_eq!(code(&args), 2);
    assert_eq!(code(&["select", "--scores", &w.p("r.csv"), "--kind", "rl", "--out", &w.p("m.json")]), 2);
}

#[test]
fn modes_agree_and_report_lists_recall_and_truth() {
    let w = Work::built();
    ok(&["build", "--corpus", &w.p("c.jsonl"), "--out", &w.p("gl"), "--mode", "lsh"]);
    ok(&["score-sft", "--graphs", &w.p("g"), "--out", &w.p("s.csv")]);
    ok(&[
        "report", "--graphs", &w.p("g"), "--compare", &w.p("gl"), "--truth", &w.p("c.truth.json"), "--sft-scores",
        &w.p("s.csv"), "--out", &w.p("r.json"), "--text", &w.p("r.txt"),
    ]);
    let r = json(&w.path("r.json"));
    assert_eq!(r["lsh"]["recall"], 1.0);
    assert_eq!(r["lsh"]["refines_exact"], true);
    assert_eq!(r["truth"]["all_match"], true);
    let truth = json(&w.path("c.truth.json"));
    for (task, t) in r["tasks"].as_array().unwrap().iter().zip(truth["tasks"].as_array().unwrap()) {
        assert_eq!(task["task_id"], t["task_id"]);
        assert_eq!(task["nodes"].as_u64().unwrap() as usize, t["labels"].as_array().unwrap().len());
    }
    // Recall 1.0 means the two builds partition every task identically.
    for i in 0..6 {
        let name = format!("task-{i:05}.json");
        let exact = json(&w.path("g").join(&name));
        let lsh = json(&w.path("gl").join(&name));
        assert_eq!(exact["paths"], lsh["paths"]);
    }
    let text = std::fs::read_to_string(w.path("r.txt")).unwrap();
    assert!(text.contains("lsh recall 1.0000"));
    // Two builds in the same mode cannot be compared.
    assert_eq!(code(&["report", "--graphs", &w.p("g"), "--compare", &w.p("g")]), 2);
}

#[test]
fn report_prints_text_without_outputs() {
    let w = Work::built();
    let out = ok(&["report", "--graphs", &w.p("g")]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("graphs: 6 tasks, exact mode"));
}

#[test]
fn synth_seed_flag_overrides_spec() {
    let w = Work::new();
    ok(&["synth", "--out", &w.p("a.jsonl"), "--seed", "1"]);
    ok(&["synth", "--out", &w.p("b.jsonl"), "--seed", "1"]);
    ok(&["synth", "--out", &w.p("c.jsonl"), "--seed", "2"]);
    let read = |n: &str| std::fs::read(w.path(n)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
    assert_eq!(read("a.truth.json"), read("c.truth.json"));
}
