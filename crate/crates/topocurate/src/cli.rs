//! Command-line front end.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use topocurate_core::rl::{score_tasks, DivVariant};
use topocurate_core::selector::{select_tasks, select_trajectories};
use topocurate_core::sft::{composite_and_sampling, raw_scores, SrareDenominator};
use topocurate_core::topology::build_quotient_graph;
use topocurate_core::{Corpus, MergeMode, QuotientGraph, SftWeights, Strategy};

use crate::config::{self, parse_reals, PipelineConfig};
use crate::error::{Error, Result};
use crate::graphfile::{write_dir, GraphFile};
use crate::io::{load_corpus, read_json, write_json, write_text};
use crate::manifest::{Kind, Manifest};
use crate::report::{self, Report, REPORT_SCHEMA};
use crate::scores::{read_rl, read_sft, write_rl, write_sft};
use crate::synth;

#[derive(Debug, Parser)]
#[command(name = "topocurate", version, about = "Curate agent trajectories through per-task quotient graphs")]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Exact,
    Lsh,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StrategyArg {
    TopWeight,
    SeededSample,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SrareArg {
    DistinctNodes,
    Turns,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DivArg {
    UniqueChain,
    LiteralPassRatio,
}

/// Flags accepted by every subcommand.
#[derive(Debug, Default, Args)]
pub struct Shared {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = one per core). Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Seed for seeded selection and for synthetic corpora.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, global = true)]
    pub delta_tool: Option<f64>,
    #[arg(long, global = true)]
    pub delta_result: Option<f64>,
    #[arg(long, global = true)]
    pub eps_dip: Option<f64>,
    #[arg(long, global = true)]
    pub eps_fail: Option<f64>,
    /// Composite weights as `eff,rare,ref`.
    #[arg(long, global = true, value_name = "EFF,RARE,REF")]
    pub lambda: Option<String>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    /// Inclusive RL pass-rate band as `min,max`.
    #[arg(long, global = true, value_name = "MIN,MAX")]
    pub band: Option<String>,
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// List excluded entries with reasons in the selection manifest.
    #[arg(long, global = true)]
    pub explain: bool,
    /// Drop malformed corpus records instead of failing.
    #[arg(long, global = true)]
    pub skip_invalid: bool,
    #[arg(long, global = true)]
    pub lsh_seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub srare_denominator: Option<SrareArg>,
    #[arg(long, global = true, value_enum)]
    pub div_variant: Option<DivArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build one quotient graph per task.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write Graphviz files.
        #[arg(long)]
        dot: bool,
    },
    /// Score trajectories for fine-tuning selection.
    ScoreSft(ScoreArgs),
    /// Score tasks for reinforcement-learning selection.
    ScoreRl(ScoreArgs),
    /// Select trajectories or tasks from a score table.
    Select {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        per_task_cap: Option<usize>,
        /// Fail when the eligible pool is smaller than the budget.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a planted corpus and its ground truth.
    Synth {
        /// Recipe file (JSON or TOML); the built-in fixtures when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Corpus path; the truth goes next to it as `<stem>.truth.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize graphs and scores.
    Report {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        sft_scores: Option<PathBuf>,
        #[arg(long)]
        rl_scores: Option<PathBuf>,
        /// Graph directory built from the same corpus in the other mode.
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Ground truth written by `synth`.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Text rendering path; printed to stdout when neither output is given.
        #[arg(long)]
        text: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Graph directory written by `build`.
    #[arg(long)]
    pub graphs: PathBuf,
    /// CSV output; a JSON mirror is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Corpus the graphs were built from, cross-checked when given.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

/// Loads the config file and applies flag overrides, then validates.
pub fn resolve_config(shared: &Shared) -> Result<(PipelineConfig, bool)> {
    let loaded = config::load(shared.config.as_deref())?;
    let mut c = loaded.config;
    if let Some(m) = shared.mode {
        c.topology.mode = match m {
            ModeArg::Exact => MergeMode::Exact,
            ModeArg::Lsh => MergeMode::Lsh,
        };
    }
    if let Some(v) = shared.delta_tool {
        c.topology.similarity.delta_tool = v;
    }
    if let Some(v) = shared.delta_result {
        c.topology.similarity.delta_result = v;
    }
    if let Some(v) = shared.lsh_seed {
        c.topology.lsh.seed = v;
    }
    if let Some(v) = shared.eps_dip {
        c.sft.eps_dip = v;
    }
    if let Some(text) = &shared.lambda {
        let [lambda_eff, lambda_rare, lambda_ref] = parse_reals::<3>("lambda", text)?;
        c.sft.weights = SftWeights {
            lambda_eff,
            lambda_rare,
            lambda_ref,
        };
    }
    if let Some(d) = shared.srare_denominator {
        c.sft.srare_denominator = match d {
            SrareArg::DistinctNodes => SrareDenominator::DistinctNodes,
            SrareArg::Turns => SrareDenominator::Turns,
        };
    }
    if let Some(v) = shared.eps_fail {
        c.rl.eps_fail = v;
    }
    if let Some(v) = shared.alpha {
        c.rl.alpha = v;
    }
    if let Some(v) = shared.temperature {
        c.rl.temperature = v;
    }
    if let Some(text) = &shared.band {
        let band = parse_reals::<2>("band", text)?;
        c.rl.band = band;
        c.selection.rl_band = band;
    }
    if let Some(d) = shared.div_variant {
        c.rl.div_variant = match d {
            DivArg::UniqueChain => DivVariant::UniqueChain,
            DivArg::LiteralPassRatio => DivVariant::LiteralPassRatio,
        };
    }
    if let Some(b) = shared.budget {
        c.selection.budget = b;
    }
    if let Some(s) = shared.strategy {
        c.selection.strategy = match s {
            StrategyArg::TopWeight => Strategy::TopWeight,
            StrategyArg::SeededSample => Strategy::SeededSample,
        };
    }
    if let Some(seed) = shared.seed {
        c.selection.seed = seed;
    }
    c.validate()?;
    Ok((c, loaded.budget_set || shared.budget.is_some()))
}

pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.shared.jobs)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    pool.install(|| dispatch(&cli))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let shared = &cli.shared;
    let (cfg, budget_set) = resolve_config(shared)?;
    match &cli.command {
        Command::Build { corpus, out, dot } => cmd_build(&cfg, corpus, out, *dot, shared.skip_invalid),
        Command::ScoreSft(a) => cmd_score_sft(&cfg, a, shared.skip_invalid),
        Command::ScoreRl(a) => cmd_score_rl(&cfg, a, shared.skip_invalid),
        Command::Select {
            scores,
            kind,
            per_task_cap,
            strict,
            out,
        } => {
            if !budget_set {
                return Err(Error::input("select needs --budget (or `selection.budget` in the config)"));
            }
            let mut sel = cfg.selection.clone();
            if per_task_cap.is_some() {
                sel.per_task_cap = *per_task_cap;
            }
            sel.strict |= *strict;
            sel.validate().map_err(|e| Error::input(e.to_string()))?;
            cmd_select(sel, *kind, scores, out, shared.explain)
        }
        Command::Synth { spec, out } => {
            let mut spec = match spec {
                Some(p) => synth::load_spec(p)?,
                None => synth::default_spec(0),
            };
            if let Some(seed) = shared.seed {
                spec.seed = seed;
            }
            let (corpus, truth) = synth::run(&spec, out)?;
            log::info!(
                "wrote {} tasks, {} trajectories to {} (truth: {} classes)",
                corpus.tasks().len(),
                corpus.trajectory_count(),
                out.display(),
                truth.tasks.iter().map(|t| t.class_count()).sum::<usize>()
            );
            Ok(())
        }
        Command::Report {
            graphs,
            sft_scores,
            rl_scores,
            compare,
            truth,
            out,
            text,
        } => cmd_report(graphs, sft_scores, rl_scores, compare, truth, out, text),
    }
}

pub fn cmd_build(cfg: &PipelineConfig, corpus: &Path, out: &Path, dot: bool, skip_invalid: bool) -> Result<()> {
    let (corpus, skipped) = load_corpus(corpus, skip_invalid)?;
    if !skipped.is_empty() {
        log::warn!("skipped {} invalid records", skipped.len());
    }
    let files = corpus
        .tasks()
        .par_iter()
        .map(|task| {
            let g = build_quotient_graph(task, &cfg.topology)
                .map_err(|e| Error::input(format!("task `{}`: {e}", task.task_id)))?;
            Ok(GraphFile::new(&g, task, &cfg.topology))
        })
        .collect::<Result<Vec<_>>>()?;
    write_dir(out, &cfg.topology, &files, dot)?;
    log::info!("built {} graphs into {}", files.len(), out.display());
    Ok(())
}

fn load_checked(args: &ScoreArgs, skip_invalid: bool) -> Result<Vec<QuotientGraph>> {
    let (_, graphs) = report::load_graphs(&args.graphs)?;
    let graphs: Vec<QuotientGraph> = graphs.into_iter().map(|(_, g)| g).collect();
    if let Some(path) = &args.corpus {
        let (corpus, _) = load_corpus(path, skip_invalid)?;
        cross_check(&corpus, &graphs)?;
    }
    Ok(graphs)
}

/// Every corpus task must have a graph covering exactly its trajectories.
pub fn cross_check(corpus: &Corpus, graphs: &[QuotientGraph]) -> Result<()> {
    let by_id: BTreeMap<&str, &QuotientGraph> = graphs.iter().map(|g| (g.task_id(), g)).collect();
    if by_id.len() != corpus.tasks().len() {
        return Err(Error::input(format!(
            "corpus has {} tasks but the graph directory has {}",
            corpus.tasks().len(),
            by_id.len()
        )));
    }
    for task in corpus.tasks() {
        let g = by_id
            .get(task.task_id.as_str())
            .ok_or_else(|| Error::input(format!("no graph for task `{}`", task.task_id)))?;
        if g.trajectory_count() != task.trajectories.len() {
            return Err(Error::input(format!("task `{}`: trajectory count differs from its graph", task.task_id)));
        }
        for t in &task.trajectories {
            g.project(t)
                .map_err(|e| Error::input(format!("task `{}`: {e}", task.task_id)))?;
        }
    }
    Ok(())
}

pub fn cmd_score_sft(cfg: &PipelineConfig, args: &ScoreArgs, skip_invalid: bool) -> Result<()> {
    let graphs = load_checked(args, skip_invalid)?;
    // Raw metrics per task in parallel; normalization needs the whole pool.
    let raw: Vec<_> = graphs
        .par_iter()
        .map(|g| raw_scores(g, &cfg.sft))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let scores = composite_and_sampling(&raw, &cfg.sft.weights);
    write_sft(&args.out, &cfg.sft, &scores)
}

pub fn cmd_score_rl(cfg: &PipelineConfig, args: &ScoreArgs, skip_invalid: bool) -> Result<()> {
    let graphs = load_checked(args, skip_invalid)?;
    let scores = score_tasks(&graphs, &cfg.rl);
    write_rl(&args.out, &cfg.rl, &scores)
}

pub fn cmd_select(
    sel: topocurate_core::SelectionConfig,
    kind: Kind,
    scores: &Path,
    out: &Path,
    explain: bool,
) -> Result<()> {
    let selection = match kind {
        Kind::Sft => select_trajectories(&read_sft(scores)?, &sel),
        Kind::Rl => select_tasks(&read_rl(scores)?, sel.budget, &sel),
    }
    .map_err(|e| Error::input(e.to_string()))?;
    if selection.shortfall > 0 {
        log::warn!(
            "eligible pool is {} short of the budget of {}",
            selection.shortfall,
            sel.budget
        );
    }
    write_json(out, &Manifest::new(kind, sel, selection, explain))
}

#[allow(clippy::too_many_arguments)]
fn cmd_report(
    graphs: &Path,
    sft_scores: &Option<PathBuf>,
    rl_scores: &Option<PathBuf>,
    compare: &Option<PathBuf>,
    truth: &Option<PathBuf>,
    out: &Option<PathBuf>,
    text: &Option<PathBuf>,
) -> Result<()> {
    let (mode, loaded) = report::load_graphs(graphs)?;
    let tasks = loaded
        .par_iter()
        .map(|(f, g)| report::summarize_task(f, g))
        .collect();
    let lsh = match compare {
        Some(dir) => {
            let (other_mode, other) = report::load_graphs(dir)?;
            Some(report::compare((mode, &loaded), (other_mode, &other))?)
        }
        None => None,
    };
    let truth = match truth {
        Some(p) => Some(report::check_truth(&loaded, &read_json(p)?)),
        None => None,
    };
    let r = Report {
        schema: REPORT_SCHEMA.into(),
        mode,
        tasks,
        sft: sft_scores.as_deref().map(read_sft).transpose()?.map(|s| report::summarize_sft(&s)),
        rl: rl_scores.as_deref().map(read_rl).transpose()?.map(|s| report::summarize_rl(&s)),
        lsh,
        truth,
    };
    let rendered = report::render_text(&r);
    if let Some(p) = out {
        write_json(p, &r)?;
    }
    match text {
        Some(p) => write_text(p, &rendered)?,
        None if out.is_none() => print!("{rendered}"),
        None => {}
    }
    Ok(())
}
