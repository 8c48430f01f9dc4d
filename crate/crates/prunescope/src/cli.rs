//! Command-line interface. Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use prunescope_core::hypotheses::{evaluate_hypotheses, HypothesisReport, DEFAULT_WINDOW};
use prunescope_core::importance::Metric;
use prunescope_core::pruner::{verify_consistency, PrunePlan};
use prunescope_core::trace::{EpochTable, TraceRecord};

use crate::checkpoint::Checkpoint;
use crate::config::{DataSpec, ExperimentConfig};
use crate::error::{read_json, write_json, AppError, Result};
use crate::experiment::{self, PruneRequest, StateRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "prunescope", version, about = "Component-aware structured pruning experiments", arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and record its importance trace.
    Train {
        /// Experiment config (JSON). Defaults to the toy multi-head model.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Replace the configured data with the seeded synthetic dataset.
        #[arg(long)]
        synthetic: bool,
        /// Override the configured epoch count.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Plan and apply a structured prune.
    Prune {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Trace whose final smoothed scores rank the groups.
        #[arg(long, required_unless_present = "apply")]
        trace: Option<PathBuf>,
        /// Fraction of parameters to remove.
        #[arg(long, required_unless_present = "apply")]
        sparsity: Option<f64>,
        #[arg(long, value_parser = parse_metric, default_value = "combined")]
        metric: Metric,
        /// Group ids to leave untouched (comma separated).
        #[arg(long, value_delimiter = ',')]
        protect: Vec<String>,
        /// Write the computed plan here.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Apply a previously written plan instead of computing one.
        #[arg(long, conflicts_with_all = ["trace", "sparsity"])]
        apply: Option<PathBuf>,
        /// Directory for the pruned checkpoint, plan and manifest.
        #[arg(long, required_unless_present = "plan")]
        out: Option<PathBuf>,
    },
    /// Continue training a checkpoint.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        epochs: usize,
        /// Output directory; defaults to `finetune/` next to the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        synthetic: bool,
    },
    /// Summarize a trace.
    Report {
        #[arg(long)]
        trace: PathBuf,
        /// Evaluate the three importance hypotheses.
        #[arg(long)]
        hypotheses: bool,
        /// Epochs averaged for the ranking hypotheses.
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        /// `importance.json` from the same run, to show posterior means.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Check a checkpoint for shape consistency.
    Verify {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    Metric::parse(s).ok_or_else(|| format!("unknown metric `{s}` (grad, fisher, bayes, combined)"))
}

/// Runs the CLI, writing normal output to `out` and diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn load_config(path: Option<&Path>, synthetic: bool) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => {
            if synthetic {
                // skip the data-file check; the data is replaced below
                let text = std::fs::read_to_string(p).map_err(|e| AppError::io(p, e))?;
                let mut c = ExperimentConfig::from_json(&text)?;
                c.apply_env()?;
                c
            } else {
                ExperimentConfig::load(p)?
            }
        }
        None => {
            let mut c = ExperimentConfig::toy();
            c.apply_env()?;
            c
        }
    };
    if synthetic {
        cfg.data = DataSpec::synthetic();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    let w = |e: std::io::Error| AppError::Other(format!("writing output: {e}"));
    match command {
        Command::Train { config, out: dir, synthetic, epochs } => {
            let mut cfg = load_config(config.as_deref(), synthetic)?;
            if let Some(n) = epochs {
                cfg.epochs = n;
            }
            let (run, files) = experiment::train_to_dir(&cfg, &dir)?;
            writeln!(out, "trained {} epochs, {} parameters in {} groups", cfg.epochs, run.summary.params, run.summary.groups).map_err(w)?;
            writeln!(out, "final task loss {:.6e}", run.summary.final_task_loss).map_err(w)?;
            if let Some(t) = run.summary.test_mse {
                writeln!(out, "held-out MSE {t:.6e}").map_err(w)?;
            }
            writeln!(out, "wrote {}", files.checkpoint.display()).map_err(w)?;
            Ok(EXIT_OK)
        }
        Command::Prune { checkpoint, trace, sparsity, metric, protect, plan, apply, out: dir } => {
            let given: Option<PrunePlan> = apply.as_deref().map(read_json).transpose()?;
            let req = PruneRequest {
                checkpoint: &checkpoint,
                trace: trace.as_deref(),
                sparsity: sparsity.unwrap_or(0.0),
                metric,
                weights: Default::default(),
                protect,
                plan: given,
            };
            match dir {
                None => {
                    let (_, _, _, p) = experiment::plan_prune(&req)?;
                    let path = plan.expect("clap requires --plan without --out");
                    write_json(&path, &p)?;
                    writeln!(out, "planned {} of {} parameters, wrote {}", p.planned_removed_params, p.total_params, path.display()).map_err(w)?;
                }
                Some(dir) => {
                    let result = experiment::prune(&req)?;
                    if let Some(path) = plan {
                        write_json(&path, &result.plan)?;
                    }
                    experiment::write_prune(&result, &dir)?;
                    let (before, after) = (result.before.param_count(), result.after.param_count());
                    writeln!(out, "pruned {} -> {} parameters ({:.2}% removed)", before, after, 100.0 * (before - after) as f64 / before as f64).map_err(w)?;
                    for (id, g) in &result.plan.per_group {
                        writeln!(out, "  {id}: {} units", g.units_removed).map_err(w)?;
                    }
                    writeln!(out, "wrote {}", dir.join("checkpoint.json").display()).map_err(w)?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Finetune { checkpoint, config, epochs, out: dir, synthetic } => {
            let cfg = load_config(Some(&config), synthetic)?;
            let dir = dir.unwrap_or_else(|| checkpoint.parent().unwrap_or(Path::new(".")).join("finetune"));
            let (run, files) = experiment::finetune_to_dir(&checkpoint, &cfg, epochs, &dir)?;
            writeln!(out, "fine-tuned {epochs} epochs, final task loss {:.6e}", run.summary.final_task_loss).map_err(w)?;
            if let Some(t) = run.summary.test_mse {
                writeln!(out, "held-out MSE {t:.6e}").map_err(w)?;
            }
            writeln!(out, "wrote {}", files.checkpoint.display()).map_err(w)?;
            Ok(EXIT_OK)
        }
        Command::Report { trace, hypotheses, window, state } => {
            let records = crate::trace_io::load_trace(&trace)?;
            print_summary(&records, out).map_err(w)?;
            if let Some(p) = state {
                let states: Vec<StateRecord> = read_json(&p)?;
                writeln!(out, "\nposterior").map_err(w)?;
                for s in states {
                    writeln!(out, "  {:<32} mu {:.6e}  1/mu {:.6e}", s.state.group_id, s.mu, s.inverse_mu).map_err(w)?;
                }
            }
            if hypotheses {
                let report = evaluate_hypotheses(&records, window)?;
                print_hypotheses(&report, out).map_err(w)?;
            }
            Ok(EXIT_OK)
        }
        Command::Verify { checkpoint } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let net = ck.network()?;
            ck.graph(&net)?;
            let report = verify_consistency(&net);
            if report.passed() {
                writeln!(out, "consistency: pass ({} layers, {} parameters)", net.layers().len(), net.param_count()).map_err(w)?;
                Ok(EXIT_OK)
            } else {
                writeln!(out, "consistency: FAIL").map_err(w)?;
                for i in &report.issues {
                    writeln!(out, "  {}", i.message).map_err(w)?;
                }
                Ok(EXIT_RUNTIME)
            }
        }
    }
}

fn print_summary(records: &[TraceRecord], out: &mut dyn Write) -> std::io::Result<()> {
    let table = match EpochTable::new(records) {
        Ok(t) => t,
        Err(_) => return writeln!(out, "empty trace"),
    };
    let last = table.rows.last().expect("non-empty table");
    writeln!(out, "{} epochs, {} groups; final epoch {}", table.epochs.len(), table.group_ids.len(), table.epochs.last().unwrap())?;
    writeln!(out, "{:<32} {:<18} {:>12} {:>12} {:>12} {:>12} {:>12}", "group", "kind", "lambda", "ema_grad", "ema_fisher", "ema_bayes", "l1_norm")?;
    for r in last {
        writeln!(
            out,
            "{:<32} {:<18} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            r.group_id,
            r.kind.as_str(),
            r.lambda,
            r.ema_grad,
            r.ema_fisher,
            r.ema_bayes,
            r.l1_norm
        )?;
    }
    writeln!(out, "task loss {:.6e}, total loss {:.6e}", last[0].task_loss, last[0].total_loss)?;
    writeln!(out, "note: bayes scores use mu = alpha/beta, the posterior rate, which falls as gradient energy grows;")?;
    writeln!(out, "      1/mu (see --state) is the expected energy, i.e. the long-term activity reading")
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn print_hypotheses(r: &HypothesisReport, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "\nhypotheses (window {} of {} epochs)", r.window, r.epochs)?;
    for w in &r.warnings {
        writeln!(out, "warning: {w}")?;
    }
    writeln!(out, "H1 coupling group top-ranked")?;
    for m in &r.metrics {
        writeln!(out, "  {:<7} {:<4} top: {}", m.metric.as_str(), yes_no(m.coupling_top), m.ranking[0])?;
    }
    match &r.earliest_specific {
        Some(id) => {
            writeln!(out, "H2 earliest component-specific group ({id}) bottom-ranked")?;
            for m in &r.metrics {
                let bottom = m.ranking.last().unwrap();
                writeln!(out, "  {:<7} {:<4} bottom: {bottom}", m.metric.as_str(), yes_no(m.earliest_specific_bottom == Some(true)))?;
            }
        }
        None => writeln!(out, "H2 not applicable: no component-specific group")?,
    }
    writeln!(out, "H3 rank crossovers")?;
    for m in &r.metrics {
        let verdict = if m.is_static() { "static" } else { "dynamic" };
        let first: Vec<String> = m.crossover_epochs.iter().take(8).map(|e| e.to_string()).collect();
        let more = if m.crossovers() > 8 { ", ..." } else { "" };
        writeln!(out, "  {:<7} {:>4} {verdict} [{}{more}]", m.metric.as_str(), m.crossovers(), first.join(", "))?;
    }
    Ok(())
}
