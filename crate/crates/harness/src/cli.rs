//! The `rvos` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 some expressions failed,
//! 3 configuration or dataset error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use rvos_core::gate::Consensus;
use rvos_core::metrics::{aggregate, final_score, render_table, ExpressionScore};
use rvos_core::scheduler::{plan, SchedulerConfig};

use crate::config::{build_services, BackendSpec, RunConfig};
use crate::dataset::{self, load_manifest, GroundTruth};
use crate::error::{HarnessError, Result};
use crate::fixture::{self, FixtureOptions};
use crate::pipeline;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "rvos", version, about = "Referring video object segmentation harness")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

/// Overrides applied on top of the config file.
#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset root (contains one directory per split).
    #[arg(long, global = true)]
    pub root: Option<PathBuf>,
    #[arg(long, global = true)]
    pub split: Option<String>,
    /// Run output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub gate: Option<Toggle>,
    #[arg(long, global = true, value_parser = parse_consensus)]
    pub consensus: Option<Consensus>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[arg(long, global = true)]
    pub tau: Option<f32>,
    /// oracle, forced_mapping, zero or http=<url>.
    #[arg(long, global = true)]
    pub backend: Option<BackendSpec>,
}

fn parse_consensus(s: &str) -> std::result::Result<Consensus, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the clip plan of a video as JSON.
    Plan {
        /// Plan for a video of this many frames.
        #[arg(long, conflicts_with = "video", required_unless_present = "video")]
        length: Option<usize>,
        /// Plan for this dataset video.
        #[arg(long)]
        video: Option<String>,
        #[arg(long)]
        t_target: Option<usize>,
        #[arg(long)]
        n_clips: Option<usize>,
    },
    /// Run the existence gate only; one decision per line.
    Gate,
    /// Predict every expression without evaluating.
    Infer,
    /// Score predictions, or aggregate a scores file.
    Eval {
        /// Prediction directory (with predictions.json).
        #[arg(long, conflicts_with = "scores", required_unless_present = "scores")]
        predictions: Option<PathBuf>,
        /// JSON: {"jf", "n_acc", "t_acc"}, a list of those, or a list of per-expression scores.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Predict and evaluate.
    Run,
    /// Write KFC composites, and mask overlays when given predictions.
    Render {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        video: Option<String>,
    },
    /// Generate the synthetic dataset.
    Fixture {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        videos: usize,
    },
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.root {
            cfg.paths.root = v.clone();
        }
        if let Some(v) = &self.split {
            cfg.paths.split = v.clone();
        }
        if let Some(v) = &self.out {
            cfg.paths.out = v.clone();
        }
        if let Some(v) = self.gate {
            cfg.gate.enabled = v == Toggle::On;
        }
        if let Some(v) = self.consensus {
            cfg.gate.consensus = v;
        }
        if let Some(v) = self.parallelism {
            cfg.parallelism = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = &self.backend {
            cfg.backend = v.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Deserialize)]
struct Triple {
    jf: f64,
    n_acc: f64,
    t_acc: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScoresFile {
    Triple(Triple),
    Triples(Vec<Triple>),
    Expressions(Vec<ExpressionScore>),
}

fn print_json<T: serde::Serialize>(out: &mut dyn std::io::Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializes");
    writeln!(out, "{text}").map_err(|e| HarnessError::io("<stdout>", e))
}

fn eval_scores(path: &Path, out: &mut dyn std::io::Write) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let parsed: ScoresFile = serde_json::from_str(&text).map_err(|e| HarnessError::json(path, e))?;
    let w = |out: &mut dyn std::io::Write, s: String| writeln!(out, "{s}").map_err(|e| HarnessError::io("<stdout>", e));
    match parsed {
        ScoresFile::Triple(t) => w(out, format!("{:.2}", final_score(t.jf, t.n_acc, t.t_acc))),
        ScoresFile::Triples(ts) => {
            for t in ts {
                w(
                    out,
                    format!(
                        "{:.2} {:.2} {:.2} -> {:.2}",
                        t.jf,
                        t.n_acc,
                        t.t_acc,
                        final_score(t.jf, t.n_acc, t.t_acc)
                    ),
                )?;
            }
            Ok(())
        }
        ScoresFile::Expressions(s) => w(out, render_table(&aggregate(&s)?)),
    }
}

/// Runs one parsed command; returns the exit code.
pub fn execute(cli: Cli, out: &mut dyn std::io::Write) -> Result<i32> {
    let cfg = cli.common.resolve()?;
    let manifest = || load_manifest(&cfg.paths.root, &cfg.paths.split);
    match cli.command {
        Command::Plan {
            length,
            video,
            t_target,
            n_clips,
        } => {
            let sched = SchedulerConfig {
                t_target: t_target.unwrap_or(cfg.scheduler.t_target),
                n_clips: n_clips.unwrap_or(cfg.scheduler.n_clips),
            };
            let len = match (length, video) {
                (Some(n), _) => n,
                (None, Some(id)) => manifest()?
                    .video(&id)
                    .ok_or_else(|| HarnessError::Dataset(format!("unknown video '{id}'")))?
                    .video
                    .len(),
                (None, None) => unreachable!("clap requires one of them"),
            };
            print_json(out, &plan(len, &sched).map_err(|e| HarnessError::Config(e.to_string()))?)?;
            Ok(EXIT_OK)
        }
        Command::Gate => {
            let m = manifest()?;
            let services = build_services(&cfg, &m)?;
            let decisions = pipeline::gate_all(&m, &cfg, &services)?;
            for d in &decisions {
                writeln!(out, "{}", serde_json::to_string(d).expect("serializes"))
                    .map_err(|e| HarnessError::io("<stdout>", e))?;
            }
            let nulls = decisions.iter().filter(|d| d.is_null_target()).count();
            log::info!("{nulls} of {} expressions gated as null_target", decisions.len());
            Ok(EXIT_OK)
        }
        Command::Infer | Command::Run => {
            let evaluate = matches!(cli.command, Command::Run);
            let m = manifest()?;
            let services = build_services(&cfg, &m)?;
            let summary = pipeline::run(&m, &cfg, &services, &cfg.paths.out, evaluate)?;
            if let Some(r) = &summary.report {
                write!(out, "{}", render_table(r)).map_err(|e| HarnessError::io("<stdout>", e))?;
            }
            log::info!(
                "{} expressions, {} null_target, {} backend calls, {} failed",
                summary.outcomes.len(),
                summary.null_targets(),
                summary.backend_calls(),
                summary.failures.len()
            );
            if summary.failures.is_empty() {
                Ok(EXIT_OK)
            } else {
                eprintln!("{} of {} expressions failed:", summary.failures.len(), summary.outcomes.len());
                for (id, e) in &summary.failures {
                    eprintln!("  {id}: {e}");
                }
                Ok(EXIT_PARTIAL)
            }
        }
        Command::Eval { predictions, scores } => {
            if let Some(path) = scores {
                eval_scores(&path, out)?;
                return Ok(EXIT_OK);
            }
            let dir = predictions.expect("clap requires one of them");
            let m = manifest()?;
            let truth = GroundTruth::load(&m)?;
            let preds = dataset::read_predictions(&m, &dir)?;
            let report = pipeline::evaluate(&m, &preds, &truth, cfg.metrics.boundary_tolerance)?;
            if cli.common.out.is_some() || cli.common.config.is_some() {
                pipeline::write_report(&report, &cfg.paths.out)?;
            }
            write!(out, "{}", render_table(&report)).map_err(|e| HarnessError::io("<stdout>", e))?;
            Ok(EXIT_OK)
        }
        Command::Render { predictions, video } => {
            let m = manifest()?;
            let n = pipeline::render(&m, &cfg, predictions.as_deref(), video.as_deref(), &cfg.paths.out)?;
            writeln!(out, "wrote {n} images under {}", cfg.paths.out.display())
                .map_err(|e| HarnessError::io("<stdout>", e))?;
            Ok(EXIT_OK)
        }
        Command::Fixture { seed, videos } => {
            let opts = FixtureOptions {
                seed,
                videos,
                ..FixtureOptions::default()
            };
            fixture::generate(&cfg.paths.root, &cfg.paths.split, &opts)?;
            writeln!(
                out,
                "wrote {videos} videos to {}",
                cfg.paths.root.join(&cfg.paths.split).display()
            )
            .map_err(|e| HarnessError::io("<stdout>", e))?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (program name first) and runs; never panics on bad input.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
