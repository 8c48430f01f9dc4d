//! The training loop that collects importance traces, plus small datasets.
//!
//! Every iteration runs forward, task-loss backward, the importance update on
//! those task gradients, then adds the L1 subgradient for the current epoch's
//! coefficients and takes an optimizer step.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::importance::{group_grads, initial_states, update_all, validate_gamma, BayesConfig, GroupImportanceState, UnitScores, DEFAULT_GAMMA};
use crate::matrix::Matrix;
use crate::modelgraph::ComponentGraph;
use crate::netcore::{l1_subgradient, mse_loss, Adam, Network, Optimizer, Sgd};
use crate::scheduler::{group_l1_norms, group_lambdas, l1_term, total_loss, ScheduleConfig};
use crate::trace::TraceRecord;

/// Paired inputs and regression targets, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Matrix) -> Result<Self> {
        if inputs.rows() != targets.rows() || inputs.rows() == 0 {
            return Err(Error::Config(format!(
                "dataset needs matching non-zero sample counts, got {} inputs and {} targets",
                inputs.rows(),
                targets.rows()
            )));
        }
        Ok(Self { inputs, targets })
    }

    /// Reconstruction data: the targets are the inputs.
    pub fn autoencoding(inputs: Matrix) -> Result<Self> {
        let targets = inputs.clone();
        Self::new(inputs, targets)
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn batch(&self, idx: &[usize]) -> (Matrix, Matrix) {
        (self.inputs.select_rows(idx), self.targets.select_rows(idx))
    }

    /// The first `n` samples.
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        let (inputs, targets) = self.batch(&idx);
        Self { inputs, targets }
    }
}

/// `y = A x + b` with `x ~ U[-1, 1]^in_dim` and seeded `A`, `b` in `[-1, 1]`.
pub fn synthetic_affine(samples: usize, in_dim: usize, out_dim: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..in_dim * out_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let b: Vec<f64> = (0..out_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let scale = 1.0 / libm::sqrt(in_dim.max(1) as f64);
    let mut x = Vec::with_capacity(samples * in_dim);
    let mut y = Vec::with_capacity(samples * out_dim);
    for _ in 0..samples {
        let row: Vec<f64> = (0..in_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        for o in 0..out_dim {
            let dot: f64 = a[o * in_dim..(o + 1) * in_dim].iter().zip(&row).map(|(a, x)| a * x).sum();
            y.push(scale * dot + b[o]);
        }
        x.extend(row);
    }
    Dataset::new(Matrix::from_vec(samples, in_dim, x)?, Matrix::from_vec(samples, out_dim, y)?)
}

/// Reconstruction data lying on a seeded `rank`-dimensional affine subspace of
/// `[0, 1]^dim`: `x = c + A z` with `z ~ U[-1, 1]^rank`.
pub fn synthetic_subspace(samples: usize, dim: usize, rank: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = 0.25 / rank.max(1) as f64;
    let c: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.25..=0.75)).collect();
    let a: Vec<f64> = (0..dim * rank).map(|_| rng.gen_range(-spread..=spread)).collect();
    let mut x = Vec::with_capacity(samples * dim);
    for _ in 0..samples {
        let z: Vec<f64> = (0..rank).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        for p in 0..dim {
            let v: f64 = a[p * rank..(p + 1) * rank].iter().zip(&z).map(|(a, z)| a * z).sum();
            x.push(c[p] + v);
        }
    }
    Dataset::autoencoding(Matrix::from_vec(samples, dim, x)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum OptimizerConfig {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl OptimizerConfig {
    pub fn build(&self) -> Box<dyn Optimizer> {
        match *self {
            OptimizerConfig::Sgd { lr } => Box::new(Sgd { lr }),
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => Box::new(Adam::new(lr, beta1, beta2, eps)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::Sgd { lr } => lr > 0.0 && lr.is_finite(),
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                lr > 0.0 && lr.is_finite() && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    pub bayes: BayesConfig,
    /// `n_groups` is overwritten with the manifest's group count.
    pub schedule: ScheduleConfig,
    pub gamma: f64,
    pub optimizer: OptimizerConfig,
    /// Also track the per-unit scores that order units inside a group.
    pub unit_scores: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 110,
            batch_size: 64,
            seed: 0,
            bayes: BayesConfig::default(),
            schedule: ScheduleConfig::default(),
            gamma: DEFAULT_GAMMA,
            optimizer: OptimizerConfig::default(),
            unit_scores: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        self.bayes.validate()?;
        validate_gamma(self.gamma)?;
        self.optimizer.validate()?;
        let mut s = self.schedule;
        s.n_groups = s.n_groups.max(1);
        s.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub trace: Vec<TraceRecord>,
    pub states: Vec<GroupImportanceState>,
    pub unit_scores: Option<UnitScores>,
    /// Mean task loss of every epoch.
    pub epoch_task_loss: Vec<f64>,
}

/// Sample order for epoch `epoch` (zero-based).
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

pub fn train(net: &mut Network, graph: &ComponentGraph, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.inputs.cols() != net.input_dim() || data.targets.cols() != net.output_dim() {
        return Err(Error::Config(format!(
            "data is {} -> {} but the network maps {} -> {}",
            data.inputs.cols(),
            data.targets.cols(),
            net.input_dim(),
            net.output_dim()
        )));
    }
    if graph.total_params() != net.param_count() {
        return Err(Error::Mismatch("group manifest does not match the network".into()));
    }
    let mut schedule = cfg.schedule;
    schedule.n_groups = graph.groups.len();
    schedule.validate()?;

    let mut optimizer = cfg.optimizer.build();
    let mut states = initial_states(graph, &cfg.bayes);
    let mut units = cfg.unit_scores.then(|| UnitScores::new(net));
    let tensors: Vec<_> = graph.groups.iter().map(|g| g.tensors()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs * graph.groups.len());
    let mut epoch_task_loss = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lambdas = group_lambdas(epoch, graph, &schedule);
        let weight = schedule.lambda_weight_at(epoch);
        let order = epoch_order(data.len(), cfg.seed, epoch);
        let (mut task_sum, mut total_sum) = (0.0, 0.0);
        for (iteration, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = data.batch(idx);
            let cache = net.forward(&x)?;
            let (task, d_out) = mse_loss(&cache.output, &y)?;
            let total = total_loss(task, l1_term(net, graph, &lambdas)?, weight);
            if !total.is_finite() {
                return Err(Error::Diverged { epoch: epoch + 1, iteration, loss: total });
            }
            net.backward(&cache, &d_out)?;
            update_all(&mut states, &group_grads(net, graph), &cfg.bayes, cfg.gamma)?;
            if let Some(u) = units.as_mut() {
                u.update(net, cfg.gamma)?;
            }
            for (t, &lambda) in tensors.iter().zip(&lambdas) {
                l1_subgradient(net, t, weight * lambda);
            }
            optimizer.step(net).map_err(|e| match e {
                Error::NonFinite { context } => Error::NonFinite {
                    context: format!("{context} (epoch {}, iteration {iteration})", epoch + 1),
                },
                other => other,
            })?;
            let n = idx.len() as f64;
            task_sum += task * n;
            total_sum += total * n;
        }
        let task_loss = task_sum / data.len() as f64;
        let total_loss = total_sum / data.len() as f64;
        epoch_task_loss.push(task_loss);
        let norms = group_l1_norms(net, graph);
        for (i, (g, state)) in graph.groups.iter().zip(&states).enumerate() {
            trace.push(TraceRecord {
                epoch: epoch + 1,
                group_id: g.id.clone(),
                kind: g.kind,
                lambda: lambdas[i],
                raw_grad: state.raw_grad,
                ema_grad: state.ema_grad,
                raw_fisher: state.raw_fisher,
                ema_fisher: state.ema_fisher,
                raw_bayes: state.raw_bayes,
                ema_bayes: state.ema_bayes,
                l1_norm: norms[i],
                task_loss,
                total_loss,
            });
        }
    }
    Ok(TrainOutcome { trace, states, unit_scores: units, epoch_task_loss })
}

/// Mean squared error over the whole dataset, evaluated in chunks.
pub fn evaluate_mse(net: &Network, data: &Dataset, chunk: usize) -> Result<f64> {
    let chunk = chunk.max(1);
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut sum = 0.0;
    for part in idx.chunks(chunk) {
        let (x, y) = data.batch(part);
        let (loss, _) = mse_loss(&net.forward(&x)?.output, &y)?;
        sum += loss * part.len() as f64;
    }
    Ok(sum / data.len() as f64)
}
