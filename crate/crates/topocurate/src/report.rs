//! Diagnostic summary over a graph directory and optional score tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use topocurate_core::testkit::GroundTruth;
use topocurate_core::{MergeMode, QuotientGraph, RlTaskScore, SftScore};

use crate::error::{Error, Result};
use crate::graphfile::{listed_files, read_graph, read_index, GraphFile};

pub const REPORT_SCHEMA: &str = "topocurate-report/1";
pub const PHI_BINS: usize = 10;
const RANKED: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: String,
    /// Non-root nodes.
    pub nodes: usize,
    pub edges: usize,
    pub trajectories: usize,
    pub turns: usize,
    pub pass_rate: f64,
    pub candidate_pairs: u64,
    /// Non-root potentials in ten equal bins over [0, 1].
    pub phi_histogram: [u64; PHI_BINS],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dist {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Dist {
    fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut n = 0usize;
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for v in values {
            n += 1;
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        (n > 0).then(|| Dist {
            min,
            mean: sum / n as f64,
            max,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedTrajectory {
    pub task_id: String,
    pub traj_id: String,
    pub w: f64,
    pub sampling_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SftSummary {
    pub trajectories: usize,
    pub successes: usize,
    pub s_ref: Option<Dist>,
    pub s_eff: Option<Dist>,
    pub s_rare: Option<Dist>,
    pub w: Option<Dist>,
    /// Successful trajectories with the highest composite.
    pub top: Vec<RankedTrajectory>,
    pub bottom: Vec<RankedTrajectory>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedTask {
    pub task_id: String,
    pub composite: f64,
    pub p_select: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RlSummary {
    pub tasks: usize,
    /// Tasks inside the pass-rate band (positive selection probability).
    pub in_band: usize,
    pub v_struct: Option<Dist>,
    pub v_div: Option<Dist>,
    pub top: Vec<RankedTask>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LshComparison {
    pub tasks_compared: usize,
    /// Turn pairs sharing an exact-mode class.
    pub exact_pairs: u64,
    /// Of those, pairs that also share an LSH class.
    pub recovered_pairs: u64,
    pub recall: f64,
    /// Every LSH class lies inside one exact class.
    pub refines_exact: bool,
    pub exact_candidate_pairs: u64,
    pub lsh_candidate_pairs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub task_id: String,
    pub nodes: usize,
    pub truth_classes: Option<usize>,
    pub partition_match: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthCheck {
    pub all_match: bool,
    pub tasks: Vec<TruthRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub mode: MergeMode,
    pub tasks: Vec<TaskSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sft: Option<SftSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rl: Option<RlSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lsh: Option<LshComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthCheck>,
}

/// Every graph of a directory, in index order.
pub fn load_graphs(dir: &Path) -> Result<(MergeMode, Vec<(GraphFile, QuotientGraph)>)> {
    let index = read_index(dir)?;
    let graphs = listed_files(dir, &index)?
        .iter()
        .map(|p| read_graph(p))
        .collect::<Result<Vec<_>>>()?;
    Ok((index.config.mode, graphs))
}

pub fn phi_histogram(graph: &QuotientGraph) -> [u64; PHI_BINS] {
    let mut bins = [0u64; PHI_BINS];
    for v in graph.nodes().filter(|v| !v.is_root()) {
        let b = ((graph.phi(v) * PHI_BINS as f64) as usize).min(PHI_BINS - 1);
        bins[b] += 1;
    }
    bins
}

pub fn summarize_task(file: &GraphFile, graph: &QuotientGraph) -> TaskSummary {
    TaskSummary {
        task_id: file.task_id.clone(),
        nodes: graph.node_count() - 1,
        edges: graph.edges().len(),
        trajectories: graph.trajectory_count(),
        turns: file.stats.turns,
        pass_rate: graph.pass_rate(),
        candidate_pairs: file.stats.candidate_pairs,
        phi_histogram: phi_histogram(graph),
    }
}

fn ranked(s: &SftScore) -> RankedTrajectory {
    RankedTrajectory {
        task_id: s.task_id.clone(),
        traj_id: s.traj_id.clone(),
        w: s.w,
        sampling_weight: s.sampling_weight,
    }
}

pub fn summarize_sft(scores: &[SftScore]) -> SftSummary {
    let mut ok: Vec<&SftScore> = scores.iter().filter(|s| s.reward == 1).collect();
    ok.sort_by(|a, b| {
        b.w.total_cmp(&a.w)
            .then_with(|| (&a.task_id, &a.traj_id).cmp(&(&b.task_id, &b.traj_id)))
    });
    let top = ok.iter().take(RANKED).map(|s| ranked(s)).collect();
    let bottom = ok.iter().rev().take(RANKED).map(|s| ranked(s)).collect();
    SftSummary {
        trajectories: scores.len(),
        successes: ok.len(),
        s_ref: Dist::of(scores.iter().map(|s| s.s_ref)),
        s_eff: Dist::of(scores.iter().map(|s| s.s_eff)),
        s_rare: Dist::of(scores.iter().map(|s| s.s_rare)),
        w: Dist::of(scores.iter().map(|s| s.w)),
        top,
        bottom,
    }
}

pub fn summarize_rl(scores: &[RlTaskScore]) -> RlSummary {
    let mut banded: Vec<&RlTaskScore> = scores.iter().filter(|s| s.p_select > 0.0).collect();
    banded.sort_by(|a, b| b.p_select.total_cmp(&a.p_select).then_with(|| a.task_id.cmp(&b.task_id)));
    RlSummary {
        tasks: scores.len(),
        in_band: banded.len(),
        v_struct: Dist::of(scores.iter().map(|s| s.v_struct)),
        v_div: Dist::of(scores.iter().map(|s| s.v_div)),
        top: banded
            .iter()
            .take(RANKED)
            .map(|s| RankedTask {
                task_id: s.task_id.clone(),
                composite: s.composite,
                p_select: s.p_select,
            })
            .collect(),
    }
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Pair counts `(exact pairs, recovered pairs, refines)` of two partitions
/// over the same turns.
pub fn pair_recall(exact: &[usize], lsh: &[usize]) -> (u64, u64, bool) {
    let mut exact_sizes: BTreeMap<usize, u64> = BTreeMap::new();
    let mut joint: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut lsh_home: BTreeMap<usize, usize> = BTreeMap::new();
    let mut refines = true;
    for (&e, &l) in exact.iter().zip(lsh) {
        *exact_sizes.entry(e).or_default() += 1;
        *joint.entry((e, l)).or_default() += 1;
        refines &= *lsh_home.entry(l).or_insert(e) == e;
    }
    (
        exact_sizes.values().map(|&n| pairs(n)).sum(),
        joint.values().map(|&n| pairs(n)).sum(),
        refines,
    )
}

/// Compares an exact-mode and an LSH-mode build of the same corpus.
pub fn compare(
    (mode_a, a): (MergeMode, &[(GraphFile, QuotientGraph)]),
    (mode_b, b): (MergeMode, &[(GraphFile, QuotientGraph)]),
) -> Result<LshComparison> {
    let (exact, lsh) = match (mode_a, mode_b) {
        (MergeMode::Exact, MergeMode::Lsh) => (a, b),
        (MergeMode::Lsh, MergeMode::Exact) => (b, a),
        _ => {
            return Err(Error::input(
                "--compare needs one exact-mode and one lsh-mode graph directory",
            ))
        }
    };
    let lsh_by_id: BTreeMap<&str, &(GraphFile, QuotientGraph)> =
        lsh.iter().map(|g| (g.0.task_id.as_str(), g)).collect();
    let mut out = LshComparison {
        tasks_compared: 0,
        exact_pairs: 0,
        recovered_pairs: 0,
        recall: 1.0,
        refines_exact: true,
        exact_candidate_pairs: 0,
        lsh_candidate_pairs: 0,
    };
    for (ef, eg) in exact {
        let Some((lf, lg)) = lsh_by_id.get(ef.task_id.as_str()) else {
            continue;
        };
        let same_turns = eg.paths().len() == lg.paths().len()
            && eg
                .paths()
                .iter()
                .zip(lg.paths())
                .all(|(x, y)| x.traj_id == y.traj_id && x.nodes.len() == y.nodes.len());
        if !same_turns {
            return Err(Error::input(format!(
                "task `{}`: the two graph directories were built from different corpora",
                ef.task_id
            )));
        }
        let (e, r, refines) = pair_recall(&eg.partition(), &lg.partition());
        out.tasks_compared += 1;
        out.exact_pairs += e;
        out.recovered_pairs += r;
        out.refines_exact &= refines;
        out.exact_candidate_pairs += ef.stats.candidate_pairs;
        out.lsh_candidate_pairs += lf.stats.candidate_pairs;
    }
    if out.exact_pairs > 0 {
        out.recall = out.recovered_pairs as f64 / out.exact_pairs as f64;
    }
    Ok(out)
}

pub fn check_truth(graphs: &[(GraphFile, QuotientGraph)], truth: &GroundTruth) -> TruthCheck {
    let tasks: Vec<TruthRow> = graphs
        .iter()
        .map(|(f, g)| {
            let t = truth.task(&f.task_id);
            TruthRow {
                task_id: f.task_id.clone(),
                nodes: g.node_count() - 1,
                truth_classes: t.map(|t| t.class_count()),
                partition_match: t.is_some_and(|t| t.partition == g.partition()),
            }
        })
        .collect();
    TruthCheck {
        all_match: tasks
            .iter()
            .all(|r| r.partition_match && r.truth_classes == Some(r.nodes)),
        tasks,
    }
}

fn fmt_dist(d: &Option<Dist>) -> String {
    match d {
        Some(d) => format!("min {:.4}  mean {:.4}  max {:.4}", d.min, d.mean, d.max),
        None => "n/a".into(),
    }
}

/// Plain-text rendering of a report.
pub fn render_text(r: &Report) -> String {
    let mut s = String::new();
    let mode = match r.mode {
        MergeMode::Exact => "exact",
        MergeMode::Lsh => "lsh",
    };
    let _ = writeln!(s, "graphs: {} tasks, {mode} mode", r.tasks.len());
    let _ = writeln!(
        s,
        "{:<24} {:>7} {:>7} {:>6} {:>7} {:>6} {:>10}  phi histogram",
        "task", "nodes", "edges", "trajs", "turns", "pass", "candidates"
    );
    for t in &r.tasks {
        let hist: Vec<String> = t.phi_histogram.iter().map(u64::to_string).collect();
        let _ = writeln!(
            s,
            "{:<24} {:>7} {:>7} {:>6} {:>7} {:>6.3} {:>10}  [{}]",
            t.task_id,
            t.nodes,
            t.edges,
            t.trajectories,
            t.turns,
            t.pass_rate,
            t.candidate_pairs,
            hist.join(" ")
        );
    }
    if let Some(sft) = &r.sft {
        let _ = writeln!(s, "\nsft: {} trajectories, {} successful", sft.trajectories, sft.successes);
        let _ = writeln!(s, "  s_ref   {}", fmt_dist(&sft.s_ref));
        let _ = writeln!(s, "  s_eff   {}", fmt_dist(&sft.s_eff));
        let _ = writeln!(s, "  s_rare  {}", fmt_dist(&sft.s_rare));
        let _ = writeln!(s, "  w       {}", fmt_dist(&sft.w));
        for (name, list) in [("top", &sft.top), ("bottom", &sft.bottom)] {
            let _ = writeln!(s, "  {name}:");
            for t in list {
                let _ = writeln!(s, "    {}/{}  w={:.4}", t.task_id, t.traj_id, t.w);
            }
        }
    }
    if let Some(rl) = &r.rl {
        let _ = writeln!(s, "\nrl: {} tasks, {} in band", rl.tasks, rl.in_band);
        let _ = writeln!(s, "  v_struct {}", fmt_dist(&rl.v_struct));
        let _ = writeln!(s, "  v_div    {}", fmt_dist(&rl.v_div));
        for t in &rl.top {
            let _ = writeln!(s, "    {}  composite={:.4} p={:.4}", t.task_id, t.composite, t.p_select);
        }
    }
    if let Some(l) = &r.lsh {
        let _ = writeln!(
            s,
            "\nlsh recall {:.4} ({}/{} pairs over {} tasks), refines exact: {}, candidates {} vs {}",
            l.recall,
            l.recovered_pairs,
            l.exact_pairs,
            l.tasks_compared,
            l.refines_exact,
            l.lsh_candidate_pairs,
            l.exact_candidate_pairs
        );
    }
    if let Some(t) = &r.truth {
        let _ = writeln!(s, "\nground truth: {}", if t.all_match { "all partitions match" } else { "MISMATCH" });
        for row in t.tasks.iter().filter(|r| !r.partition_match || r.truth_classes != Some(r.nodes)) {
            let _ = writeln!(
                s,
                "  {}: {} nodes, truth {:?}",
                row.task_id, row.nodes, row.truth_classes
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use topocurate_core::testkit::random_graph;

    #[test]
    fn histogram_counts_every_non_root_node() {
        let g = random_graph(7, 30);
        let h = phi_histogram(&g);
        assert_eq!(h.iter().sum::<u64>() as usize, g.node_count() - 1);
    }

    #[test]
    fn pair_recall_counts() {
        // exact {0,1,2} {3}; lsh splits the first class
        let (e, r, refines) = pair_recall(&[0, 0, 0, 1], &[0, 0, 1, 2]);
        assert_eq!((e, r, refines), (3, 1, true));
        let (_, _, refines) = pair_recall(&[0, 1], &[0, 0]);
        assert!(!refines);
    }

    #[test]
    fn dist_of_empty_is_none() {
        assert_eq!(Dist::of(std::iter::empty()), None);
        let d = Dist::of([1.0, 3.0]).unwrap();
        assert_eq!((d.min, d.mean, d.max), (1.0, 2.0, 3.0));
    }
}
