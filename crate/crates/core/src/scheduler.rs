//! Per-group L1 coefficients on a phase-offset cosine cycle, and the total loss.
//!
//! For group `i` of `n` with `N_i` parameters at epoch `t`:
//!
//! ```text
//! S(t, i)  = λ_min + (λ_max - λ_min) · ½ [1 + cos(2π (t + φ_i) / T)],  φ_i = (i / n) T
//! λ_i(t)   = S(t, i) / sqrt(N_i)
//! ```
//!
//! Epochs are zero-based here: the first training epoch uses `t = 0`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::modelgraph::ComponentGraph;
use crate::netcore::Network;

pub const DEFAULT_LAMBDA_BASE: f64 = 1e-5;
pub const DEFAULT_CYCLE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ScheduleConfig {
    pub lambda_base: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Cycle length in epochs.
    pub cycle_t: usize,
    pub n_groups: usize,
    /// Global penalty weight `λ_weight`.
    pub lambda_weight: f64,
    /// Optional linear ramp of `λ_weight` from 0 over this many epochs.
    pub warmup_epochs: Option<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self::from_base(DEFAULT_LAMBDA_BASE, 1)
    }
}

impl ScheduleConfig {
    /// `λ_min = 0.1 λ_base`, `λ_max = 2 λ_base`, `T = 20`, `λ_weight = 1`.
    pub fn from_base(lambda_base: f64, n_groups: usize) -> Self {
        Self {
            lambda_base,
            lambda_min: 0.1 * lambda_base,
            lambda_max: 2.0 * lambda_base,
            cycle_t: DEFAULT_CYCLE,
            n_groups,
            lambda_weight: 1.0,
            warmup_epochs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min >= 0.0 && self.lambda_min <= self.lambda_max && self.lambda_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 <= lambda_min <= lambda_max, got {} and {}",
                self.lambda_min, self.lambda_max
            )));
        }
        if self.cycle_t == 0 || self.n_groups == 0 {
            return Err(Error::Config("cycle length and group count must be at least 1".into()));
        }
        if !(self.lambda_weight >= 0.0 && self.lambda_weight.is_finite()) {
            return Err(Error::Config(format!("lambda_weight {} must be finite and >= 0", self.lambda_weight)));
        }
        Ok(())
    }

    /// `λ_weight` in effect during epoch `t`.
    pub fn lambda_weight_at(&self, t: usize) -> f64 {
        match self.warmup_epochs {
            Some(w) if w > 0 && t < w => self.lambda_weight * t as f64 / w as f64,
            _ => self.lambda_weight,
        }
    }

    /// Cosine envelope `S(t, i)` before the size normalization.
    pub fn envelope(&self, t: usize, i: usize) -> f64 {
        let period = self.cycle_t as f64;
        // Reducing t modulo T first makes the schedule exactly periodic.
        let t = (t % self.cycle_t) as f64;
        let phase = i as f64 / self.n_groups as f64 * period;
        let c = 0.5 * (1.0 + libm::cos(2.0 * core::f64::consts::PI * ((t + phase) / period)));
        // Convex form: hits λ_max at c = 1 and λ_min at c = 0 without rounding.
        self.lambda_max * c + self.lambda_min * (1.0 - c)
    }
}

/// `λ_i(t) = S(t, i) / sqrt(N_i)`.
pub fn lambda_coefficient(t: usize, i: usize, n_params: usize, cfg: &ScheduleConfig) -> f64 {
    debug_assert!(i < cfg.n_groups && n_params >= 1);
    cfg.envelope(t, i) / libm::sqrt(n_params as f64)
}

/// Coefficients for every group of `graph` at epoch `t`, in manifest order.
pub fn group_lambdas(t: usize, graph: &ComponentGraph, cfg: &ScheduleConfig) -> Vec<f64> {
    graph
        .groups
        .iter()
        .enumerate()
        .map(|(i, g)| lambda_coefficient(t, i, g.param_count, cfg))
        .collect()
}

pub fn group_l1_norms(net: &Network, graph: &ComponentGraph) -> Vec<f64> {
    graph
        .groups
        .iter()
        .map(|g| g.members.iter().map(|m| net.tensor(m.tensor).l1_norm()).sum())
        .collect()
}

/// `Σ_i λ_i ‖Θ_i‖₁`.
pub fn l1_term(net: &Network, graph: &ComponentGraph, lambdas: &[f64]) -> Result<f64> {
    if lambdas.len() != graph.groups.len() {
        return Err(Error::Mismatch(format!("{} lambdas for {} groups", lambdas.len(), graph.groups.len())));
    }
    Ok(group_l1_norms(net, graph).iter().zip(lambdas).map(|(n, l)| n * l).sum())
}

pub fn total_loss(task_loss: f64, l1: f64, lambda_weight: f64) -> f64 {
    task_loss + lambda_weight * l1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelgraph::build_groups;
    use crate::presets;

    fn cfg(n: usize) -> ScheduleConfig {
        ScheduleConfig::from_base(1e-5, n)
    }

    #[test]
    fn defaults() {
        let c = ScheduleConfig::default();
        assert_eq!(c.lambda_base, 1e-5);
        assert_eq!(c.lambda_min, 0.1 * 1e-5);
        assert_eq!(c.lambda_max, 2.0 * 1e-5);
        assert_eq!(c.cycle_t, 20);
        assert_eq!(c.lambda_weight, 1.0);
    }

    #[test]
    fn peak_and_trough() {
        let c = cfg(4);
        assert_eq!(c.envelope(0, 0), 2e-5);
        assert_eq!(lambda_coefficient(0, 0, 100, &c), 2e-5 / 10.0);
        assert_eq!(c.envelope(10, 0), c.lambda_min);
        assert_eq!(lambda_coefficient(10, 0, 100, &c), c.lambda_min / 10.0);
        // half-cycle phase shift
        assert_eq!(c.envelope(0, 2), c.lambda_min);
    }

    #[test]
    fn warmup_ramps_weight() {
        let mut c = cfg(1);
        c.warmup_epochs = Some(10);
        assert_eq!(c.lambda_weight_at(0), 0.0);
        assert_eq!(c.lambda_weight_at(5), 0.5);
        assert_eq!(c.lambda_weight_at(10), 1.0);
        c.warmup_epochs = None;
        assert_eq!(c.lambda_weight_at(0), 1.0);
    }

    #[test]
    fn invalid_configs() {
        let mut c = cfg(1);
        c.lambda_min = 3e-5;
        assert!(c.validate().is_err());
        let mut c = cfg(1);
        c.cycle_t = 0;
        assert!(c.validate().is_err());
        assert!(cfg(0).validate().is_err());
        assert!(cfg(3).validate().is_ok());
    }

    #[test]
    fn l1_and_total() {
        let net = presets::mlp(&[2, 1], 0).unwrap();
        let g = build_groups(&net, 1).unwrap();
        assert_eq!(l1_term(&net, &g, &[0.0]).unwrap(), 0.0);
        assert!(l1_term(&net, &g, &[0.0, 1.0]).is_err());
        assert_eq!(total_loss(0.5, 2.0, 0.0), 0.5);
        assert!((total_loss(0.5, 2.0, 0.1) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn hand_l1_term() {
        use crate::matrix::Matrix;
        use crate::netcore::{Activation, Component, DenseLayer, LayerInput, Network};
        let layer = DenseLayer::new("l", Matrix::from_vec(1, 1, alloc::vec![-2.0]).unwrap(), alloc::vec![5.0], Activation::Identity, LayerInput::Data).unwrap();
        let net = Network::new(alloc::vec![layer], alloc::vec![Component::new("c", 0..1)]).unwrap();
        let g = build_groups(&net, 1).unwrap();
        assert!((l1_term(&net, &g, &[0.1]).unwrap() - 0.7).abs() < 1e-15);
    }
}
