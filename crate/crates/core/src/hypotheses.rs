//! Verdicts on three claims about group importance, read from a trace.
//!
//! - H1: a coupling group has the highest smoothed importance, averaged over
//!   the last `window` epochs.
//! - H2: the earliest component-specific group has the lowest.
//! - H3: importance rankings are static, i.e. the descending order of the
//!   smoothed scores never changes from one epoch to the next.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::importance::{descending_order, SingleMetric};
use crate::modelgraph::GroupKind;
use crate::trace::{EpochTable, TraceRecord};

pub const DEFAULT_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricVerdict {
    pub metric: SingleMetric,
    /// Group ids by descending window-averaged score.
    pub ranking: Vec<String>,
    pub window_means: Vec<f64>,
    pub coupling_top: bool,
    /// `None` when the trace has no component-specific group.
    pub earliest_specific_bottom: Option<bool>,
    /// Epochs (as logged) whose ranking differs from the previous epoch.
    pub crossover_epochs: Vec<usize>,
}

impl MetricVerdict {
    pub fn crossovers(&self) -> usize {
        self.crossover_epochs.len()
    }

    pub fn is_static(&self) -> bool {
        self.crossover_epochs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub window: usize,
    pub epochs: usize,
    pub group_ids: Vec<String>,
    pub earliest_specific: Option<String>,
    pub metrics: Vec<MetricVerdict>,
    pub warnings: Vec<String>,
}

impl HypothesisReport {
    pub fn verdict(&self, metric: SingleMetric) -> &MetricVerdict {
        self.metrics.iter().find(|m| m.metric == metric).expect("every metric is evaluated")
    }

    pub fn coupling_top_all(&self) -> bool {
        self.metrics.iter().all(|m| m.coupling_top)
    }
}

/// Epochs at which the descending order of `scores[e]` differs from `scores[e-1]`,
/// reported through `epochs[e]`.
pub fn crossover_epochs<S: AsRef<str>>(ids: &[S], epochs: &[usize], scores: &[Vec<f64>]) -> Vec<usize> {
    let orders: Vec<Vec<usize>> = scores.iter().map(|s| descending_order(ids, s)).collect();
    (1..orders.len()).filter(|&e| orders[e] != orders[e - 1]).map(|e| epochs[e]).collect()
}

pub fn evaluate_hypotheses(trace: &[TraceRecord], window: usize) -> Result<HypothesisReport> {
    if window == 0 {
        return Err(Error::Config("hypothesis window must be at least one epoch".into()));
    }
    let table = EpochTable::new(trace)?;
    let n_epochs = table.epochs.len();
    let mut warnings = Vec::new();
    let window_used = if n_epochs < window {
        warnings.push(format!("trace has {n_epochs} epochs, shorter than the {window}-epoch window; averaging over all of them"));
        n_epochs
    } else {
        window
    };
    let n_groups = table.group_ids.len();
    let earliest = table.kinds.iter().position(|&k| k == GroupKind::ComponentSpecific);
    if !table.kinds.contains(&GroupKind::Coupling) {
        warnings.push("trace has no coupling group".into());
    }

    let metrics = SingleMetric::ALL
        .iter()
        .map(|&metric| {
            let per_epoch: Vec<Vec<f64>> = (0..n_epochs).map(|e| table.scores(e, metric)).collect();
            let mut means = alloc::vec![0.0; n_groups];
            for row in &per_epoch[n_epochs - window_used..] {
                for (m, v) in means.iter_mut().zip(row) {
                    *m += v;
                }
            }
            means.iter_mut().for_each(|m| *m /= window_used as f64);
            let order = descending_order(&table.group_ids, &means);
            MetricVerdict {
                metric,
                ranking: order.iter().map(|&g| table.group_ids[g].clone()).collect(),
                coupling_top: table.kinds[order[0]] == GroupKind::Coupling,
                earliest_specific_bottom: earliest.map(|g| order[n_groups - 1] == g),
                crossover_epochs: crossover_epochs(&table.group_ids, &table.epochs, &per_epoch),
                window_means: means,
            }
        })
        .collect();

    Ok(HypothesisReport {
        window: window_used,
        epochs: n_epochs,
        group_ids: table.group_ids.clone(),
        earliest_specific: earliest.map(|g| table.group_ids[g].clone()),
        metrics,
        warnings,
    })
}
