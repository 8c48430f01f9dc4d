//! Training, fine-tuning and pruning runs with their on-disk outputs.

use std::path::{Path, PathBuf};

use prunescope_core::importance::{BayesConfig, GroupImportanceState, Metric, MetricWeights, UnitScores};
use prunescope_core::modelgraph::{build_groups, ComponentGraph};
use prunescope_core::netcore::Network;
use prunescope_core::pruner::{allocate_budget, apply_prune, PrunePlan};
use prunescope_core::trace::EpochTable;
use prunescope_core::training::{evaluate_mse, synthetic_affine, synthetic_subspace, train, Dataset, TrainOutcome};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{DataSpec, ExperimentConfig, ModelSpec};
use crate::error::{write_json, AppError, Result};
use crate::idx::load_idx;
use crate::trace_io::{emit_trace, TraceFormat};

pub struct Data {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Data> {
    match &cfg.data {
        DataSpec::Mnist { train_images, test_images, train_limit, test_limit } => {
            let read = |p: &Path, limit: &Option<usize>| -> Result<Dataset> {
                let images = load_idx(p)?;
                if images.dims.len() != 3 {
                    return Err(AppError::Config(format!("{} is not an image file", p.display())));
                }
                let d = Dataset::autoencoding(images.to_unit_matrix())?;
                Ok(limit.map_or(d.clone(), |n| d.head(n)))
            };
            let train = read(train_images, train_limit)?;
            let test = test_images.as_deref().map(|p| read(p, test_limit)).transpose()?;
            Ok(Data { train, test })
        }
        DataSpec::Synthetic { samples, rank, seed } => {
            let seed = seed.unwrap_or(cfg.seed);
            let net = cfg.model.build(0)?;
            let train = match cfg.model {
                ModelSpec::Autoencoder { .. } => synthetic_subspace(*samples, net.input_dim(), *rank, seed)?,
                _ => synthetic_affine(*samples, net.input_dim(), net.output_dim(), seed)?,
            };
            Ok(Data { train, test: None })
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub kind: prunescope_core::modelgraph::GroupKind,
    pub layers: Vec<usize>,
    pub components: Vec<String>,
    pub param_count: usize,
    pub tensors: Vec<String>,
}

pub fn manifest(net: &Network, graph: &ComponentGraph) -> Vec<ManifestEntry> {
    graph
        .groups
        .iter()
        .map(|g| ManifestEntry {
            id: g.id.clone(),
            kind: g.kind,
            layers: g.layers.clone(),
            components: g.components.clone(),
            param_count: g.param_count,
            tensors: g.members.iter().map(|m| net.tensor(m.tensor).name.clone()).collect(),
        })
        .collect()
}

/// Final importance state of one group, with the posterior mean and its inverse
/// (the expected gradient energy).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateRecord {
    #[serde(flatten)]
    pub state: GroupImportanceState,
    pub mu: f64,
    pub inverse_mu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub epochs: usize,
    pub params: usize,
    pub groups: usize,
    pub final_task_loss: f64,
    pub test_mse: Option<f64>,
}

pub struct RunFiles {
    pub checkpoint: PathBuf,
    pub trace_csv: PathBuf,
    pub trace_json: PathBuf,
    pub manifest: PathBuf,
    pub importance: PathBuf,
    pub summary: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            checkpoint: dir.join("checkpoint.json"),
            trace_csv: dir.join("trace.csv"),
            trace_json: dir.join("trace.json"),
            manifest: dir.join("manifest.json"),
            importance: dir.join("importance.json"),
            summary: dir.join("summary.json"),
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

fn write_run(dir: &Path, net: &Network, graph: &ComponentGraph, outcome: &TrainOutcome, ck: &Checkpoint, summary: &RunSummary) -> Result<RunFiles> {
    create_dir(dir)?;
    let files = RunFiles::in_dir(dir);
    ck.save(&files.checkpoint)?;
    emit_trace(&outcome.trace, TraceFormat::Csv, &files.trace_csv)?;
    emit_trace(&outcome.trace, TraceFormat::Json, &files.trace_json)?;
    write_json(&files.manifest, &manifest(net, graph))?;
    let states: Vec<StateRecord> =
        outcome.states.iter().map(|s| StateRecord { state: s.clone(), mu: s.mu(), inverse_mu: 1.0 / s.mu() }).collect();
    write_json(&files.importance, &states)?;
    write_json(&files.summary, summary)?;
    Ok(files)
}

pub struct Run {
    pub net: Network,
    pub graph: ComponentGraph,
    pub outcome: TrainOutcome,
    pub summary: RunSummary,
}

fn train_and_summarize(mut net: Network, graph: ComponentGraph, cfg: &ExperimentConfig, data: &Data, epochs: usize) -> Result<Run> {
    let mut tc = cfg.train_config();
    tc.epochs = epochs;
    let outcome = train(&mut net, &graph, &data.train, &tc)?;
    let test_mse = data.test.as_ref().map(|t| evaluate_mse(&net, t, 256)).transpose()?;
    let summary = RunSummary {
        seed: cfg.seed,
        epochs,
        params: net.param_count(),
        groups: graph.len(),
        final_task_loss: outcome.epoch_task_loss.last().copied().unwrap_or(f64::NAN),
        test_mse,
    };
    Ok(Run { net, graph, outcome, summary })
}

/// Trains from a fresh seeded network.
pub fn run_train(cfg: &ExperimentConfig, data: &Data) -> Result<Run> {
    let net = cfg.model.build(cfg.seed)?;
    let graph = build_groups(&net, cfg.layers_per_group)?;
    train_and_summarize(net, graph, cfg, data, cfg.epochs)
}

pub fn train_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<(Run, RunFiles)> {
    let data = load_data(cfg)?;
    let run = run_train(cfg, &data)?;
    let ck = Checkpoint::from_network(&run.net, cfg.layers_per_group, run.outcome.unit_scores.clone(), cfg.epochs);
    let files = write_run(out, &run.net, &run.graph, &run.outcome, &ck, &run.summary)?;
    Ok((run, files))
}

/// Continues training a checkpoint (typically a pruned one) with fresh
/// optimizer and importance state.
pub fn finetune_to_dir(checkpoint: &Path, cfg: &ExperimentConfig, epochs: usize, out: &Path) -> Result<(Run, RunFiles)> {
    let ck = Checkpoint::load(checkpoint)?;
    let net = ck.network()?;
    let graph = ck.graph(&net)?;
    let data = load_data(cfg)?;
    let run = train_and_summarize(net, graph, cfg, &data, epochs)?;
    let ck = Checkpoint::from_network(&run.net, ck.layers_per_group, run.outcome.unit_scores.clone(), ck.epochs_trained + epochs);
    let files = write_run(out, &run.net, &run.graph, &run.outcome, &ck, &run.summary)?;
    Ok((run, files))
}

/// Unit scores of the layers that survive `plan`.
pub fn prune_unit_scores(scores: &UnitScores, plan: &PrunePlan) -> UnitScores {
    let removed = plan.units_by_layer();
    let layers = scores
        .layers
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let drop = removed.get(&k);
            s.iter().enumerate().filter(|(u, _)| drop.map_or(true, |d| d.binary_search(u).is_err())).map(|(_, &v)| v).collect()
        })
        .collect();
    UnitScores { layers, updates: scores.updates }
}

pub struct PruneRequest<'a> {
    pub checkpoint: &'a Path,
    pub trace: Option<&'a Path>,
    pub sparsity: f64,
    pub metric: Metric,
    pub weights: MetricWeights,
    pub protect: Vec<String>,
    /// Apply this plan instead of computing one.
    pub plan: Option<PrunePlan>,
}

pub struct PruneResult {
    pub plan: PrunePlan,
    pub before: Network,
    pub after: Network,
    pub checkpoint: Checkpoint,
    pub graph: ComponentGraph,
}

pub fn states_from_trace(path: &Path, graph: &ComponentGraph) -> Result<Vec<GroupImportanceState>> {
    let records = crate::trace_io::load_trace(path)?;
    let table = EpochTable::new(&records)?;
    let states = table.final_states(&BayesConfig::default());
    let ids: Vec<&str> = graph.groups.iter().map(|g| g.id.as_str()).collect();
    let trace_ids: Vec<&str> = states.iter().map(|s| s.group_id.as_str()).collect();
    if ids != trace_ids {
        return Err(AppError::Other(format!(
            "trace groups {trace_ids:?} do not match the checkpoint's groups {ids:?}; use the trace written with this checkpoint"
        )));
    }
    Ok(states)
}

pub fn plan_prune(req: &PruneRequest<'_>) -> Result<(Checkpoint, Network, ComponentGraph, PrunePlan)> {
    let ck = Checkpoint::load(req.checkpoint)?;
    let net = ck.network()?;
    let graph = ck.graph(&net)?;
    let plan = match &req.plan {
        Some(p) => p.clone(),
        None => {
            let trace = req.trace.ok_or_else(|| AppError::Other("computing a plan needs --trace".into()))?;
            let states = states_from_trace(trace, &graph)?;
            allocate_budget(&net, &graph, &states, ck.unit_scores.as_ref(), req.sparsity, req.metric, &req.weights, &req.protect)?
        }
    };
    Ok((ck, net, graph, plan))
}

pub fn prune(req: &PruneRequest<'_>) -> Result<PruneResult> {
    let (ck, net, graph, plan) = plan_prune(req)?;
    let (after, new_graph) = apply_prune(&net, &graph, &plan)?;
    let scores = ck.unit_scores.as_ref().map(|s| prune_unit_scores(s, &plan));
    let checkpoint = Checkpoint::from_network(&after, ck.layers_per_group, scores, ck.epochs_trained);
    Ok(PruneResult { plan, before: net, after, checkpoint, graph: new_graph })
}

pub fn write_prune(result: &PruneResult, out: &Path) -> Result<()> {
    create_dir(out)?;
    result.checkpoint.save(out.join("checkpoint.json"))?;
    write_json(&out.join("plan.json"), &result.plan)?;
    write_json(&out.join("manifest.json"), &manifest(&result.after, &result.graph))
}
