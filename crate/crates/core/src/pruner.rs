//! Structured pruning: importance-driven unit budgets and their excision.
//!
//! Each unprotected group receives a removal weight `1 - Î_g`, where `Î_g` is
//! its min-max normalized score under the chosen metric. Units are then handed
//! out one at a time to the group whose fraction `r_g / U_g` lags its weight the
//! most, until the removed parameter count reaches the target. This is the same
//! as removing `floor(s · w_g · U_g)` units per group and raising the common
//! scale `s` until the budget is met, but lands within one unit of the target.
//!
//! Inside a group, units go in ascending order of their smoothed unit score.
//! No layer loses more than 90% of its units or its last unit, and the outputs
//! of sink layers are never pruned.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::importance::{metric_scores, min_max_normalize, GroupImportanceState, Metric, MetricWeights, UnitScores};
use crate::matrix::Matrix;
use crate::modelgraph::{build_groups, dependency_closure, ComponentGraph};
use crate::netcore::{DenseLayer, LayerInput, Network};

/// Largest fraction of a layer's units that a plan may remove.
pub const MAX_UNIT_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UnitRemoval {
    pub layer: usize,
    /// Output-unit indices, ascending.
    pub units: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupPlan {
    pub units_removed: usize,
    pub removals: Vec<UnitRemoval>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrunePlan {
    pub target_sparsity: f64,
    pub ranking_used: Metric,
    pub protected: Vec<String>,
    pub per_group: BTreeMap<String, GroupPlan>,
    pub total_params: usize,
    pub planned_removed_params: usize,
}

impl PrunePlan {
    /// A plan that removes nothing.
    pub fn empty(graph: &ComponentGraph, metric: Metric) -> Self {
        Self {
            target_sparsity: 0.0,
            ranking_used: metric,
            protected: Vec::new(),
            per_group: BTreeMap::new(),
            total_params: graph.total_params(),
            planned_removed_params: 0,
        }
    }

    /// Removed units keyed by layer.
    pub fn units_by_layer(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for gp in self.per_group.values() {
            for r in &gp.removals {
                out.entry(r.layer).or_default().extend_from_slice(&r.units);
            }
        }
        for v in out.values_mut() {
            v.sort_unstable();
        }
        out
    }
}

/// Unit indices in ascending score order; equal scores keep index order.
pub fn rank_units_within_group(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(core::cmp::Ordering::Equal));
    idx
}

/// Units a plan may take from a layer with `out` units.
pub fn layer_unit_cap(out: usize) -> usize {
    let frac = (MAX_UNIT_FRACTION * out as f64) as usize;
    frac.min(out.saturating_sub(1))
}

/// Parameters removed from the network when `removed[k]` output units of every
/// layer `k` go, counting each element once.
pub fn removed_param_count(net: &Network, removed: &[usize]) -> usize {
    net.layers()
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let rows = removed[k];
            let cols = match l.input {
                LayerInput::Layer(src) => removed[src],
                LayerInput::Data => 0,
            };
            rows * (l.in_dim() + 1) + cols * l.out_dim() - rows * cols
        })
        .sum()
}

/// Parameters in the dependency closure of one unit of `layer`.
pub fn unit_closure_size(net: &Network, layer: usize) -> usize {
    let l = &net.layers()[layer];
    l.in_dim() + 1 + net.consumers(layer).iter().map(|&c| net.layers()[c].out_dim()).sum::<usize>()
}

/// Largest single-unit closure among prunable layers.
pub fn unit_granularity(net: &Network) -> usize {
    prunable_layers(net).into_iter().map(|k| unit_closure_size(net, k)).max().unwrap_or(0)
}

/// Layers whose outputs feed another layer.
pub fn prunable_layers(net: &Network) -> Vec<usize> {
    let sinks: BTreeSet<usize> = net.sinks().into_iter().collect();
    (0..net.layers().len()).filter(|k| !sinks.contains(k)).collect()
}

struct Candidate {
    sequence: Vec<(usize, usize)>,
    units_total: usize,
}

fn group_candidates(net: &Network, graph: &ComponentGraph, unit_scores: Option<&UnitScores>) -> Vec<Candidate> {
    let prunable: BTreeSet<usize> = prunable_layers(net).into_iter().collect();
    graph
        .groups
        .iter()
        .map(|g| {
            let layers: Vec<usize> = g.layers.iter().copied().filter(|k| prunable.contains(k)).collect();
            let mut pool: Vec<(usize, usize)> = Vec::new();
            let mut scores: Vec<f64> = Vec::new();
            for &k in &layers {
                let out = net.layers()[k].out_dim();
                for u in 0..out {
                    pool.push((k, u));
                    scores.push(unit_scores.and_then(|s| s.layers.get(k)).and_then(|l| l.get(u)).copied().unwrap_or(0.0));
                }
            }
            let mut taken: BTreeMap<usize, usize> = BTreeMap::new();
            let mut sequence = Vec::new();
            for i in rank_units_within_group(&scores) {
                let (k, u) = pool[i];
                let cap = layer_unit_cap(net.layers()[k].out_dim());
                let t = taken.entry(k).or_insert(0);
                if *t < cap {
                    *t += 1;
                    sequence.push((k, u));
                }
            }
            Candidate { sequence, units_total: pool.len() }
        })
        .collect()
}

/// Removal weights `1 - Î_g` before rescaling. Protected groups get 0.
pub fn removal_weights(scores: &[f64], protected: &[bool]) -> Vec<f64> {
    min_max_normalize(scores).iter().zip(protected).map(|(s, &p)| if p { 0.0 } else { 1.0 - s }).collect()
}

#[allow(clippy::too_many_arguments)]
pub fn allocate_budget(
    net: &Network,
    graph: &ComponentGraph,
    states: &[GroupImportanceState],
    unit_scores: Option<&UnitScores>,
    target_sparsity: f64,
    metric: Metric,
    weights: &MetricWeights,
    protect: &[String],
) -> Result<PrunePlan> {
    if !(target_sparsity > 0.0 && target_sparsity < 1.0) {
        return Err(Error::Config(format!("target sparsity {target_sparsity} outside (0, 1)")));
    }
    if states.len() != graph.groups.len() || states.iter().zip(&graph.groups).any(|(s, g)| s.group_id != g.id) {
        return Err(Error::Mismatch("importance states do not match the group manifest".into()));
    }
    for p in protect {
        if graph.index_of(p).is_none() {
            return Err(Error::Mismatch(format!("protected group `{p}` not in manifest")));
        }
    }
    let protected: Vec<bool> = graph.groups.iter().map(|g| protect.contains(&g.id)).collect();
    let scores = metric_scores(states, metric, weights)?;
    let mut w = removal_weights(&scores, &protected);
    let cands = group_candidates(net, graph, unit_scores);

    let eligible = |g: usize| !protected[g] && !cands[g].sequence.is_empty();
    if (0..w.len()).filter(|&g| eligible(g)).all(|g| w[g] <= 0.0) {
        // Only the top-scored group is left: fall back to uniform weights.
        for (g, wg) in w.iter_mut().enumerate() {
            *wg = if eligible(g) { 1.0 } else { 0.0 };
        }
    }

    let total = net.param_count();
    let target = target_sparsity * total as f64;
    let mut taken = vec![0usize; graph.groups.len()];
    let mut removed_units = vec![0usize; net.layers().len()];
    let mut removed = 0usize;
    let mut last_delta = 0usize;
    let mut last_group = None;
    while (removed as f64) < target {
        let next = (0..graph.groups.len())
            .filter(|&g| eligible(g) && w[g] > 0.0 && taken[g] < cands[g].sequence.len())
            .min_by(|&a, &b| {
                let ta = (taken[a] + 1) as f64 / (w[a] * cands[a].units_total as f64);
                let tb = (taken[b] + 1) as f64 / (w[b] * cands[b].units_total as f64);
                ta.partial_cmp(&tb).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
            });
        let Some(g) = next else {
            return Err(Error::Infeasible(format!(
                "can remove at most {removed} of the {target:.0} requested parameters"
            )));
        };
        let (layer, _) = cands[g].sequence[taken[g]];
        taken[g] += 1;
        removed_units[layer] += 1;
        let now = removed_param_count(net, &removed_units);
        last_delta = now - removed;
        removed = now;
        last_group = Some(g);
    }
    if let Some(g) = last_group {
        let over = removed as f64 - target;
        let under = target - (removed - last_delta) as f64;
        if under < over {
            let (layer, _) = cands[g].sequence[taken[g] - 1];
            taken[g] -= 1;
            removed_units[layer] -= 1;
            removed -= last_delta;
        }
    }

    let mut per_group = BTreeMap::new();
    for (g, group) in graph.groups.iter().enumerate() {
        if taken[g] == 0 {
            continue;
        }
        let mut by_layer: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(k, u) in &cands[g].sequence[..taken[g]] {
            by_layer.entry(k).or_default().push(u);
        }
        let removals = by_layer
            .into_iter()
            .map(|(layer, mut units)| {
                units.sort_unstable();
                UnitRemoval { layer, units }
            })
            .collect();
        per_group.insert(group.id.clone(), GroupPlan { units_removed: taken[g], removals });
    }
    Ok(PrunePlan {
        target_sparsity,
        ranking_used: metric,
        protected: protect.to_vec(),
        per_group,
        total_params: total,
        planned_removed_params: removed,
    })
}

/// Checks that `plan` only touches prunable layers of the groups it names.
pub fn validate_plan(net: &Network, graph: &ComponentGraph, plan: &PrunePlan) -> Result<()> {
    let sinks: BTreeSet<usize> = net.sinks().into_iter().collect();
    let mut seen: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (id, gp) in &plan.per_group {
        let gi = graph.index_of(id).ok_or_else(|| Error::Mismatch(format!("plan names unknown group `{id}`")))?;
        let mut count = 0;
        for r in &gp.removals {
            if !graph.groups[gi].layers.contains(&r.layer) {
                return Err(Error::Mismatch(format!("layer {} is not part of group `{id}`", r.layer)));
            }
            if sinks.contains(&r.layer) {
                return Err(Error::Mismatch(format!("layer {} is a network output and cannot be pruned", r.layer)));
            }
            let out = net.layers()[r.layer].out_dim();
            let set = seen.entry(r.layer).or_default();
            for &u in &r.units {
                if u >= out || !set.insert(u) {
                    return Err(Error::Mismatch(format!("invalid or repeated unit {u} for layer {}", r.layer)));
                }
            }
            count += r.units.len();
        }
        if count != gp.units_removed {
            return Err(Error::Mismatch(format!("group `{id}` lists {count} units but claims {}", gp.units_removed)));
        }
    }
    Ok(())
}

/// Removes the planned units and everything that depends on them, then rebuilds
/// the group manifest over the smaller network.
pub fn apply_prune(net: &Network, graph: &ComponentGraph, plan: &PrunePlan) -> Result<(Network, ComponentGraph)> {
    validate_plan(net, graph, plan)?;
    let by_layer = plan.units_by_layer();
    let n = net.layers().len();
    let mut drop_rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut drop_cols: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (&layer, units) in &by_layer {
        for slice in dependency_closure(net, layer, units)? {
            let target = match slice.axis {
                crate::modelgraph::Axis::Rows | crate::modelgraph::Axis::Bias => &mut drop_rows[slice.layer],
                crate::modelgraph::Axis::Cols => &mut drop_cols[slice.layer],
            };
            target.extend(slice.indices);
        }
    }

    let mut layers = Vec::with_capacity(n);
    for (k, l) in net.layers().iter().enumerate() {
        let (in_dim, out_dim) = (l.in_dim(), l.out_dim());
        let keep_rows: Vec<usize> = (0..out_dim).filter(|r| !drop_rows[k].contains(r)).collect();
        let keep_cols: Vec<usize> = (0..in_dim).filter(|c| !drop_cols[k].contains(c)).collect();
        if keep_rows.is_empty() || keep_cols.is_empty() {
            return Err(Error::DegenerateLayer { layer: k });
        }
        let w = l.weight.values();
        let mut values = Vec::with_capacity(keep_rows.len() * keep_cols.len());
        for &r in &keep_rows {
            values.extend(keep_cols.iter().map(|&c| w[r * in_dim + c]));
        }
        let bias: Vec<f64> = keep_rows.iter().map(|&r| l.bias.values()[r]).collect();
        let name = l.weight.name.strip_suffix(".weight").unwrap_or(&l.weight.name);
        let w = Matrix::from_vec(keep_rows.len(), keep_cols.len(), values)?;
        layers.push(DenseLayer::new(name, w, bias, l.activation, l.input)?);
    }
    let pruned = Network::new(layers, net.components().to_vec())?;
    let new_graph = build_groups(&pruned, graph.layers_per_group)?;
    Ok((pruned, new_graph))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub layer: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConsistencyReport {
    pub issues: Vec<Issue>,
}

impl ConsistencyReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Shape chaining, non-empty layers, finite parameters, and a probe forward pass.
pub fn verify_consistency(net: &Network) -> ConsistencyReport {
    let mut issues: Vec<Issue> = Vec::new();
    fn issue(issues: &mut Vec<Issue>, layer: Option<usize>, message: String) {
        issues.push(Issue { layer, message });
    }
    let layers = net.layers();
    let data_width = net.input_dim();
    for (k, l) in layers.iter().enumerate() {
        if l.out_dim() == 0 || l.in_dim() == 0 {
            issue(&mut issues, Some(k), format!("layer {k} is empty"));
        }
        if l.bias.len() != l.out_dim() {
            issue(&mut issues, Some(k), format!("layer {k}: bias length {} != {} output units", l.bias.len(), l.out_dim()));
        }
        if l.weight.len() != l.out_dim() * l.in_dim() {
            issue(&mut issues, Some(k), format!("layer {k}: weight storage does not match its shape"));
        }
        let upstream = match l.input {
            LayerInput::Data => Some(data_width),
            LayerInput::Layer(src) if src < k => Some(layers[src].out_dim()),
            LayerInput::Layer(src) => {
                issue(&mut issues, Some(k), format!("layer {k} reads non-preceding layer {src}"));
                None
            }
        };
        if let Some(width) = upstream {
            if width != l.in_dim() {
                issue(&mut issues, Some(k), format!("layer {k}: expects {} inputs, upstream provides {width}", l.in_dim()));
            }
        }
        if !l.weight.values().iter().chain(l.bias.values()).all(|v| v.is_finite()) {
            issue(&mut issues, Some(k), format!("layer {k} has non-finite parameters"));
        }
    }
    if let Err(e) = net.check_topology() {
        if issues.is_empty() {
            issue(&mut issues, None, format!("{e}"));
        }
    }
    if issues.is_empty() {
        let probe = Matrix::from_vec(2, data_width, (0..2 * data_width).map(|i| (i % 7) as f64 / 7.0).collect());
        match probe.and_then(|p| net.forward(&p)) {
            Ok(c) if c.output.is_finite() => {}
            Ok(_) => issue(&mut issues, None, "probe forward produced non-finite output".into()),
            Err(e) => issue(&mut issues, None, format!("probe forward failed: {e}")),
        }
    }
    ConsistencyReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::importance::BayesConfig;
    use crate::netcore::Shape;
    use crate::presets;

    fn states_for(graph: &ComponentGraph, scores: &[f64]) -> Vec<GroupImportanceState> {
        graph
            .groups
            .iter()
            .zip(scores)
            .map(|(g, &s)| GroupImportanceState::from_smoothed(g.id.clone(), s, s, s, &BayesConfig::default()))
            .collect()
    }

    #[test]
    fn unit_ranking() {
        assert_eq!(rank_units_within_group(&[3.0, 1.0, 2.0]), vec![1, 2, 0]);
        assert_eq!(rank_units_within_group(&[1.0; 4]), vec![0, 1, 2, 3]);
    }

    #[test]
    fn caps() {
        assert_eq!(layer_unit_cap(8), 7);
        assert_eq!(layer_unit_cap(10), 9);
        assert_eq!(layer_unit_cap(1), 0);
        assert_eq!(layer_unit_cap(100), 90);
    }

    #[test]
    fn empty_plan_is_identity() {
        let net = presets::toy_multihead(1).unwrap();
        let g = build_groups(&net, 1).unwrap();
        let (p, pg) = apply_prune(&net, &g, &PrunePlan::empty(&g, Metric::Grad)).unwrap();
        assert_eq!(p, net);
        assert_eq!(pg, g);
    }

    #[test]
    fn equal_groups_share_the_budget() {
        let net = presets::mlp(&[6, 10, 10, 3], 0).unwrap();
        let g = build_groups(&net, 1).unwrap();
        let states = states_for(&g, &[1.0, 1.0, 1.0]);
        let plan = allocate_budget(&net, &g, &states, None, 0.2, Metric::Grad, &MetricWeights::default(), &[]).unwrap();
        let a = plan.per_group.get("mlp_1").map_or(0, |p| p.units_removed);
        let b = plan.per_group.get("mlp_2").map_or(0, |p| p.units_removed);
        assert!(a.abs_diff(b) <= 1, "{a} vs {b}");
        assert!(!plan.per_group.contains_key("mlp_3"));
    }

    #[test]
    fn protection_moves_everything_elsewhere() {
        let net = presets::mlp(&[6, 10, 10, 3], 0).unwrap();
        let g = build_groups(&net, 1).unwrap();
        let states = states_for(&g, &[1.0, 1.0, 1.0]);
        let plan = allocate_budget(&net, &g, &states, None, 0.2, Metric::Grad, &MetricWeights::default(), &["mlp_1".into()]).unwrap();
        assert!(!plan.per_group.contains_key("mlp_1"));
        assert!(plan.per_group["mlp_2"].units_removed > 0);
    }

    #[test]
    fn infeasible_target() {
        let net = presets::mlp(&[6, 10, 10, 3], 0).unwrap();
        let g = build_groups(&net, 1).unwrap();
        let states = states_for(&g, &[1.0, 2.0, 3.0]);
        let err = allocate_budget(&net, &g, &states, None, 0.95, Metric::Grad, &MetricWeights::default(), &[]);
        assert!(matches!(err, Err(Error::Infeasible(_))));
        let all: Vec<String> = g.groups.iter().map(|g| g.id.clone()).collect();
        let err = allocate_budget(&net, &g, &states, None, 0.1, Metric::Grad, &MetricWeights::default(), &all);
        assert!(matches!(err, Err(Error::Infeasible(_))));
        assert!(allocate_budget(&net, &g, &states, None, 0.0, Metric::Grad, &MetricWeights::default(), &[]).is_err());
    }

    #[test]
    fn weights_are_monotone_in_importance() {
        let base = [0.2, 0.5, 0.9, 0.1];
        let w0 = removal_weights(&base, &[false; 4]);
        let mut raised = base;
        raised[1] = 0.7;
        let w1 = removal_weights(&raised, &[false; 4]);
        assert!(w1[1] <= w0[1]);
    }

    #[test]
    fn zero_units_are_excised_exactly() {
        let mut net = presets::mlp(&[4, 5, 3], 2).unwrap();
        // unit 2 of layer 0: zero incoming row, bias and outgoing column
        {
            let layers = net.layers_mut();
            for i in 0..4 {
                layers[0].weight.values_mut()[2 * 4 + i] = 0.0;
            }
            layers[0].bias.values_mut()[2] = 0.0;
            for o in 0..3 {
                layers[1].weight.values_mut()[o * 5 + 2] = 0.0;
            }
        }
        let g = build_groups(&net, 1).unwrap();
        let mut plan = PrunePlan::empty(&g, Metric::Grad);
        plan.per_group.insert("mlp_1".into(), GroupPlan { units_removed: 1, removals: vec![UnitRemoval { layer: 0, units: vec![2] }] });
        let (pruned, _) = apply_prune(&net, &g, &plan).unwrap();
        assert_eq!(pruned.param_count(), net.param_count() - (4 + 1 + 3));
        let x = Matrix::from_rows(&[&[0.3, -1.0, 2.0, 0.5], &[1.0, 1.0, -1.0, 0.0]]).unwrap();
        assert_eq!(pruned.forward(&x).unwrap().output, net.forward(&x).unwrap().output);
    }

    #[test]
    fn plans_touching_outputs_are_rejected() {
        let net = presets::mlp(&[4, 5, 3], 2).unwrap();
        let g = build_groups(&net, 1).unwrap();
        let mut plan = PrunePlan::empty(&g, Metric::Grad);
        plan.per_group.insert("mlp_2".into(), GroupPlan { units_removed: 1, removals: vec![UnitRemoval { layer: 1, units: vec![0] }] });
        assert!(apply_prune(&net, &g, &plan).is_err());
        let mut plan = PrunePlan::empty(&g, Metric::Grad);
        plan.per_group.insert("nope".into(), GroupPlan::default());
        assert!(apply_prune(&net, &g, &plan).is_err());
    }

    #[test]
    fn consistency_report() {
        let net = presets::toy_multihead(0).unwrap();
        assert!(verify_consistency(&net).passed());
        let mut bad = net.clone();
        let l = &mut bad.layers_mut()[2];
        l.weight.replace(Shape::Matrix { rows: 16, cols: 7 }, vec![0.0; 16 * 7]).unwrap();
        let report = verify_consistency(&bad);
        assert!(!report.passed());
        assert_eq!(report.issues[0].layer, Some(2));
    }
}
