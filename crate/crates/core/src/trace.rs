//! Per-epoch importance trace rows.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::importance::{BayesConfig, GroupImportanceState, SingleMetric};
use crate::modelgraph::GroupKind;

/// Column order of the serialized trace.
pub const TRACE_COLUMNS: [&str; 13] = [
    "epoch",
    "group_id",
    "kind",
    "lambda",
    "raw_grad",
    "ema_grad",
    "raw_fisher",
    "ema_fisher",
    "raw_bayes",
    "ema_bayes",
    "l1_norm",
    "task_loss",
    "total_loss",
];

/// One group at the end of one epoch. Epochs count from 1; the raw and smoothed
/// values are those after the epoch's last iteration, the losses are epoch means.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub epoch: usize,
    pub group_id: String,
    pub kind: GroupKind,
    pub lambda: f64,
    pub raw_grad: f64,
    pub ema_grad: f64,
    pub raw_fisher: f64,
    pub ema_fisher: f64,
    pub raw_bayes: f64,
    pub ema_bayes: f64,
    pub l1_norm: f64,
    pub task_loss: f64,
    pub total_loss: f64,
}

impl TraceRecord {
    pub fn ema(&self, metric: SingleMetric) -> f64 {
        match metric {
            SingleMetric::Grad => self.ema_grad,
            SingleMetric::Fisher => self.ema_fisher,
            SingleMetric::Bayes => self.ema_bayes,
        }
    }
}

/// A trace reorganized by epoch, each epoch holding one row per group in a
/// common group order.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTable<'a> {
    pub group_ids: Vec<String>,
    pub kinds: Vec<GroupKind>,
    pub epochs: Vec<usize>,
    /// `rows[e][g]`.
    pub rows: Vec<Vec<&'a TraceRecord>>,
}

impl<'a> EpochTable<'a> {
    /// Groups come in order of first appearance. Every epoch must list the same
    /// groups exactly once.
    pub fn new(records: &'a [TraceRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Config("trace is empty".into()));
        }
        let mut group_ids: Vec<String> = Vec::new();
        let mut kinds = Vec::new();
        for r in records {
            if !group_ids.contains(&r.group_id) {
                group_ids.push(r.group_id.clone());
                kinds.push(r.kind);
            }
        }
        let mut by_epoch: BTreeMap<usize, Vec<Option<&TraceRecord>>> = BTreeMap::new();
        for r in records {
            let g = group_ids.iter().position(|id| *id == r.group_id).unwrap_or_default();
            let slot = by_epoch.entry(r.epoch).or_insert_with(|| alloc::vec![None; group_ids.len()]);
            if slot[g].replace(r).is_some() {
                return Err(Error::Config(format!("epoch {} lists group `{}` twice", r.epoch, r.group_id)));
            }
        }
        let mut epochs = Vec::new();
        let mut rows = Vec::new();
        for (epoch, slots) in by_epoch {
            let row: Option<Vec<&TraceRecord>> = slots.into_iter().collect();
            let row = row.ok_or_else(|| Error::Config(format!("epoch {epoch} is missing groups")))?;
            epochs.push(epoch);
            rows.push(row);
        }
        Ok(Self { group_ids, kinds, epochs, rows })
    }

    pub fn scores(&self, e: usize, metric: SingleMetric) -> Vec<f64> {
        self.rows[e].iter().map(|r| r.ema(metric)).collect()
    }

    /// Importance states rebuilt from the smoothed values of the final epoch.
    pub fn final_states(&self, cfg: &BayesConfig) -> Vec<GroupImportanceState> {
        let last = self.rows.last().map(Vec::as_slice).unwrap_or_default();
        last.iter()
            .map(|r| GroupImportanceState::from_smoothed(r.group_id.clone(), r.ema_grad, r.ema_fisher, r.ema_bayes, cfg))
            .collect()
    }
}
