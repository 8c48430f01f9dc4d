//! Online group-importance signals computed from task-loss gradients.
//!
//! Per iteration and per group `g` with `N_g` parameters:
//!
//! * gradient magnitude `I_grad = (1/N_g) Σ |∂L/∂θ|`
//! * diagonal Fisher `I_fisher = (1/N_g) Σ (∂L/∂θ)²`, batch estimate
//! * gradient energy `E = I_grad`, fed to a Gamma(α, β) posterior over the rate
//!   of an exponential model: `α += κ`, `β += κ E / η`, `μ = α / β`
//! * empirical-Bayes score `I_bayes = ln(1 + μ) (1 + I_fisher)`
//!
//! Each raw signal is smoothed with `Ĩ(t) = γ Ĩ(t-1) + (1-γ) I(t)`; the first
//! observation initializes `Ĩ` directly.
//!
//! Note the posterior mean μ is a *rate*: persistently large energies drive it
//! down. The recurrence is kept as written; reports also expose `1/μ`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::modelgraph::ComponentGraph;
use crate::netcore::{LayerInput, Network};

pub const DEFAULT_KAPPA: f64 = 0.25;
pub const DEFAULT_GAMMA: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct BayesConfig {
    /// Fractional pseudo-count added to α each iteration.
    pub kappa: f64,
    /// Energy scale.
    pub eta: f64,
    pub alpha0: f64,
    pub beta0: f64,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self { kappa: DEFAULT_KAPPA, eta: 1.0, alpha0: 1.0, beta0: 1.0 }
    }
}

impl BayesConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.kappa) && ok(self.eta) && ok(self.alpha0) && ok(self.beta0) {
            Ok(())
        } else {
            Err(Error::Config(format!("Bayes parameters must be positive and finite: {self:?}")))
        }
    }
}

fn count(grads: &[&[f64]]) -> Result<usize> {
    let n: usize = grads.iter().map(|g| g.len()).sum();
    if n == 0 {
        Err(Error::EmptyGroup)
    } else {
        Ok(n)
    }
}

/// Mean absolute gradient over the group.
pub fn grad_magnitude(grads: &[&[f64]]) -> Result<f64> {
    let n = count(grads)?;
    let sum: f64 = grads.iter().flat_map(|g| g.iter()).map(|v| v.abs()).sum();
    Ok(sum / n as f64)
}

/// Mean squared gradient over the group.
pub fn fisher_diag(grads: &[&[f64]]) -> Result<f64> {
    let n = count(grads)?;
    let sum: f64 = grads.iter().flat_map(|g| g.iter()).map(|v| v * v).sum();
    Ok(sum / n as f64)
}

/// Per-iteration gradient energy; same statistic as [`grad_magnitude`].
pub fn group_energy(grads: &[&[f64]]) -> Result<f64> {
    grad_magnitude(grads)
}

pub fn bayes_importance(mu: f64, fisher: f64) -> f64 {
    libm::log1p(mu) * (1.0 + fisher)
}

#[inline]
pub fn ema_update(prev: f64, current: f64, gamma: f64) -> f64 {
    gamma * prev + (1.0 - gamma) * current
}

pub fn validate_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::Config(format!("EMA coefficient {gamma} outside [0, 1)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupImportanceState {
    pub group_id: String,
    pub raw_grad: f64,
    pub raw_fisher: f64,
    pub raw_bayes: f64,
    pub ema_grad: f64,
    pub ema_fisher: f64,
    pub ema_bayes: f64,
    /// Gamma shape.
    pub alpha: f64,
    /// Gamma rate.
    pub beta: f64,
    pub iteration: u64,
}

impl GroupImportanceState {
    pub fn new(group_id: impl Into<String>, cfg: &BayesConfig) -> Self {
        Self {
            group_id: group_id.into(),
            raw_grad: 0.0,
            raw_fisher: 0.0,
            raw_bayes: 0.0,
            ema_grad: 0.0,
            ema_fisher: 0.0,
            ema_bayes: 0.0,
            alpha: cfg.alpha0,
            beta: cfg.beta0,
            iteration: 0,
        }
    }

    /// State carrying only smoothed scores, e.g. recovered from a trace.
    pub fn from_smoothed(group_id: impl Into<String>, grad: f64, fisher: f64, bayes: f64, cfg: &BayesConfig) -> Self {
        Self {
            raw_grad: grad,
            raw_fisher: fisher,
            raw_bayes: bayes,
            ema_grad: grad,
            ema_fisher: fisher,
            ema_bayes: bayes,
            ..Self::new(group_id, cfg)
        }
    }

    /// Posterior mean of the exponential rate.
    pub fn mu(&self) -> f64 {
        self.alpha / self.beta
    }

    pub fn smoothed(&self, metric: SingleMetric) -> f64 {
        match metric {
            SingleMetric::Grad => self.ema_grad,
            SingleMetric::Fisher => self.ema_fisher,
            SingleMetric::Bayes => self.ema_bayes,
        }
    }
}

/// Advances the Gamma posterior by one observation and returns the new `μ`.
pub fn bayes_update(state: &mut GroupImportanceState, energy: f64, cfg: &BayesConfig) -> f64 {
    state.alpha += cfg.kappa;
    state.beta += cfg.kappa * energy / cfg.eta;
    state.mu()
}

/// One iteration for one group: raw metrics, posterior step, EMA step.
pub fn update_group(state: &mut GroupImportanceState, grads: &[&[f64]], cfg: &BayesConfig, gamma: f64) -> Result<()> {
    let raw_grad = grad_magnitude(grads)?;
    let raw_fisher = fisher_diag(grads)?;
    let mu = bayes_update(state, raw_grad, cfg);
    let raw_bayes = bayes_importance(mu, raw_fisher);
    if state.iteration == 0 {
        state.ema_grad = raw_grad;
        state.ema_fisher = raw_fisher;
        state.ema_bayes = raw_bayes;
    } else {
        state.ema_grad = ema_update(state.ema_grad, raw_grad, gamma);
        state.ema_fisher = ema_update(state.ema_fisher, raw_fisher, gamma);
        state.ema_bayes = ema_update(state.ema_bayes, raw_bayes, gamma);
    }
    state.raw_grad = raw_grad;
    state.raw_fisher = raw_fisher;
    state.raw_bayes = raw_bayes;
    state.iteration += 1;
    Ok(())
}

/// Advances every group state with its gradients. `grads[g]` lists the gradient
/// slices of group `g`, in the same order as `states`.
pub fn update_all(states: &mut [GroupImportanceState], grads: &[Vec<&[f64]>], cfg: &BayesConfig, gamma: f64) -> Result<()> {
    if states.len() != grads.len() {
        return Err(Error::Mismatch(format!("{} group states but {} gradient groups", states.len(), grads.len())));
    }
    for (state, g) in states.iter_mut().zip(grads) {
        update_group(state, g, cfg, gamma)?;
    }
    Ok(())
}

/// Gradient slices of every group of `graph`, read from `net`.
pub fn group_grads<'a>(net: &'a Network, graph: &ComponentGraph) -> Vec<Vec<&'a [f64]>> {
    graph
        .groups
        .iter()
        .map(|g| g.members.iter().map(|m| net.tensor(m.tensor).grad()).collect())
        .collect()
}

pub fn initial_states(graph: &ComponentGraph, cfg: &BayesConfig) -> Vec<GroupImportanceState> {
    graph.groups.iter().map(|g| GroupImportanceState::new(g.id.clone(), cfg)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingleMetric {
    Grad,
    Fisher,
    Bayes,
}

impl SingleMetric {
    pub const ALL: [SingleMetric; 3] = [SingleMetric::Grad, SingleMetric::Fisher, SingleMetric::Bayes];

    pub fn as_str(self) -> &'static str {
        match self {
            SingleMetric::Grad => "grad",
            SingleMetric::Fisher => "fisher",
            SingleMetric::Bayes => "bayes",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Metric {
    Grad,
    Fisher,
    Bayes,
    Combined,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Grad => "grad",
            Metric::Fisher => "fisher",
            Metric::Bayes => "bayes",
            Metric::Combined => "combined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "grad" => Some(Metric::Grad),
            "fisher" => Some(Metric::Fisher),
            "bayes" => Some(Metric::Bayes),
            "combined" => Some(Metric::Combined),
            _ => None,
        }
    }
}

/// Weights of the grad, Fisher and Bayes signals in the combined score.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct MetricWeights {
    pub grad: f64,
    pub fisher: f64,
    pub bayes: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self { grad: 1.0 / 3.0, fisher: 1.0 / 3.0, bayes: 1.0 / 3.0 }
    }
}

impl MetricWeights {
    pub fn new(grad: f64, fisher: f64, bayes: f64) -> Self {
        Self { grad, fisher, bayes }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.grad, self.fisher, self.bayes];
        if w.iter().any(|&v| !(v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("metric weights must be non-negative and sum to 1: {self:?}")));
        }
        Ok(())
    }
}

/// Scales to `[0, 1]`; a constant vector maps to all zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / span).collect()
}

/// Per-group score under `metric`. Combined scores are weighted sums of the
/// min-max normalized smoothed signals.
pub fn metric_scores(states: &[GroupImportanceState], metric: Metric, weights: &MetricWeights) -> Result<Vec<f64>> {
    if states.is_empty() {
        return Err(Error::Config("no groups to rank".into()));
    }
    let column = |m: SingleMetric| states.iter().map(|s| s.smoothed(m)).collect::<Vec<_>>();
    Ok(match metric {
        Metric::Grad => column(SingleMetric::Grad),
        Metric::Fisher => column(SingleMetric::Fisher),
        Metric::Bayes => column(SingleMetric::Bayes),
        Metric::Combined => {
            weights.validate()?;
            let g = min_max_normalize(&column(SingleMetric::Grad));
            let f = min_max_normalize(&column(SingleMetric::Fisher));
            let b = min_max_normalize(&column(SingleMetric::Bayes));
            (0..states.len())
                .map(|i| weights.grad * g[i] + weights.fisher * f[i] + weights.bayes * b[i])
                .collect()
        }
    })
}

/// Indices sorted by descending score; ties go to the smaller id.
pub fn descending_order<S: AsRef<str>>(ids: &[S], scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..ids.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then_with(|| ids[a].as_ref().cmp(ids[b].as_ref()))
    });
    idx
}

/// Group ids from most to least important.
pub fn rank_groups(states: &[GroupImportanceState], metric: Metric, weights: &MetricWeights) -> Result<Vec<String>> {
    let scores = metric_scores(states, metric, weights)?;
    let ids: Vec<&str> = states.iter().map(|s| s.group_id.as_str()).collect();
    Ok(descending_order(&ids, &scores).into_iter().map(|i| states[i].group_id.clone()).collect())
}

/// Smoothed per-unit gradient magnitude for every layer's output units.
///
/// A unit's raw score is the mean absolute gradient over the slices removed with
/// it: its weight row, its bias entry, and the matching column of every consumer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UnitScores {
    pub layers: Vec<Vec<f64>>,
    pub updates: u64,
}

impl UnitScores {
    pub fn new(net: &Network) -> Self {
        Self { layers: net.layers().iter().map(|l| vec![0.0; l.out_dim()]).collect(), updates: 0 }
    }

    pub fn raw(net: &Network) -> Vec<Vec<f64>> {
        let layers = net.layers();
        let mut sums: Vec<Vec<f64>> = layers.iter().map(|l| vec![0.0; l.out_dim()]).collect();
        let mut counts: Vec<usize> = layers.iter().map(|l| l.in_dim() + 1).collect();
        for (k, l) in layers.iter().enumerate() {
            let in_dim = l.in_dim();
            let gw = l.weight.grad();
            let gb = l.bias.grad();
            for u in 0..l.out_dim() {
                let row: f64 = gw[u * in_dim..(u + 1) * in_dim].iter().map(|v| v.abs()).sum();
                sums[k][u] += row + gb[u].abs();
            }
            if let LayerInput::Layer(src) = l.input {
                counts[src] += l.out_dim();
                for o in 0..l.out_dim() {
                    for (u, g) in gw[o * in_dim..(o + 1) * in_dim].iter().enumerate() {
                        sums[src][u] += g.abs();
                    }
                }
            }
        }
        for (s, &c) in sums.iter_mut().zip(&counts) {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
        sums
    }

    pub fn update(&mut self, net: &Network, gamma: f64) -> Result<()> {
        let raw = Self::raw(net);
        if raw.len() != self.layers.len() || raw.iter().zip(&self.layers).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::Mismatch("unit score shapes do not match the network".into()));
        }
        for (acc, cur) in self.layers.iter_mut().zip(raw) {
            for (a, c) in acc.iter_mut().zip(cur) {
                *a = if self.updates == 0 { c } else { ema_update(*a, c, gamma) };
            }
        }
        self.updates += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: &[f64] = &[1.0, -2.0, 3.0];

    #[test]
    fn hand_values() {
        assert_eq!(grad_magnitude(&[G]).unwrap(), 2.0);
        assert!((fisher_diag(&[G]).unwrap() - 14.0 / 3.0).abs() < 1e-15);
        assert_eq!(group_energy(&[G]).unwrap(), 2.0);
        let z: &[f64] = &[0.0; 4];
        assert_eq!(grad_magnitude(&[z]).unwrap(), 0.0);
        assert_eq!(fisher_diag(&[z]).unwrap(), 0.0);
        assert_eq!(grad_magnitude(&[]), Err(Error::EmptyGroup));
        assert_eq!(fisher_diag(&[&[]]), Err(Error::EmptyGroup));
    }

    #[test]
    fn split_slices_equal_concatenation() {
        assert_eq!(grad_magnitude(&[&G[..1], &G[1..]]).unwrap(), grad_magnitude(&[G]).unwrap());
    }

    #[test]
    fn bayes_single_step() {
        let cfg = BayesConfig { kappa: 0.25, eta: 1.0, alpha0: 1.0, beta0: 1.0 };
        let mut s = GroupImportanceState::new("g", &cfg);
        let mu = bayes_update(&mut s, 2.0, &cfg);
        assert_eq!(s.alpha, 1.25);
        assert_eq!(s.beta, 1.5);
        assert!((mu - 1.25 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn zero_energy_only_grows_alpha() {
        let cfg = BayesConfig::default();
        let mut s = GroupImportanceState::new("g", &cfg);
        let mu0 = s.mu();
        let mu1 = bayes_update(&mut s, 0.0, &cfg);
        assert_eq!(s.beta, 1.0);
        assert!(mu1 > mu0);
    }

    #[test]
    fn bayes_importance_values() {
        assert_eq!(bayes_importance(0.0, 123.0), 0.0);
        assert!((bayes_importance(core::f64::consts::E - 1.0, 0.0) - 1.0).abs() < 1e-15);
        // ln(1 + 0.8333) = 0.60614...
        assert!((bayes_importance(0.8333, 0.0) - 0.606_117).abs() < 1e-5);
    }

    #[test]
    fn ema_cases() {
        assert_eq!(ema_update(5.0, 2.0, 0.0), 2.0);
        assert!((ema_update(1.0, 2.0, 0.9) - 1.1).abs() < 1e-15);
        let mut v = 0.7;
        for _ in 0..50 {
            v = ema_update(v, 0.7, 0.9);
        }
        assert_eq!(v, 0.7);
        assert!(validate_gamma(1.0).is_err());
        assert!(validate_gamma(0.0).is_ok());
    }

    #[test]
    fn one_iteration_composes_the_parts() {
        let cfg = BayesConfig { kappa: 0.25, eta: 1.0, alpha0: 1.0, beta0: 1.0 };
        let mut states = vec![GroupImportanceState::new("g", &cfg)];
        update_all(&mut states, &[vec![G]], &cfg, 0.9).unwrap();
        let s = &states[0];
        assert_eq!(s.raw_grad, 2.0);
        assert_eq!(s.ema_grad, 2.0);
        assert!((s.raw_fisher - 14.0 / 3.0).abs() < 1e-15);
        assert_eq!((s.alpha, s.beta), (1.25, 1.5));
        let expected = libm::log1p(1.25 / 1.5) * (1.0 + 14.0 / 3.0);
        assert!((s.raw_bayes - expected).abs() < 1e-15);
        assert_eq!(s.iteration, 1);
        assert!(update_all(&mut states, &[], &cfg, 0.9).is_err());
    }

    #[test]
    fn zero_gradients_only_advance_alpha() {
        let cfg = BayesConfig::default();
        let mut states = vec![GroupImportanceState::new("g", &cfg)];
        let z: &[f64] = &[0.0, 0.0];
        update_all(&mut states, &[vec![z]], &cfg, 0.9).unwrap();
        let s = &states[0];
        assert_eq!((s.raw_grad, s.raw_fisher, s.ema_grad, s.ema_fisher), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(s.alpha, 1.25);
        assert_eq!(s.beta, 1.0);
    }

    fn state(id: &str, v: f64) -> GroupImportanceState {
        GroupImportanceState::from_smoothed(id, v, v * v, v + 1.0, &BayesConfig::default())
    }

    #[test]
    fn ranking() {
        let w = MetricWeights::default();
        assert_eq!(rank_groups(&[state("A", 1.0)], Metric::Grad, &w).unwrap(), ["A"]);
        let s = [state("A", 3.0), state("B", 1.0), state("C", 2.0)];
        assert_eq!(rank_groups(&s, Metric::Grad, &w).unwrap(), ["A", "C", "B"]);
        let only_grad = MetricWeights::new(1.0, 0.0, 0.0);
        assert_eq!(
            rank_groups(&s, Metric::Combined, &only_grad).unwrap(),
            rank_groups(&s, Metric::Grad, &w).unwrap()
        );
        assert!(rank_groups(&[], Metric::Grad, &w).is_err());
        assert!(rank_groups(&s, Metric::Combined, &MetricWeights::new(0.5, 0.6, 0.0)).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let s = [state("b", 1.0), state("a", 1.0), state("c", 1.0)];
        assert_eq!(rank_groups(&s, Metric::Fisher, &MetricWeights::default()).unwrap(), ["a", "b", "c"]);
    }
}
