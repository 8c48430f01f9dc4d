//! Pruning-group formation over a component-partitioned network.
//!
//! Groups are built from whole layers. Every layer that produces an activation
//! read by another component forms a coupling group together with all of its
//! cross-component consumers; coupling groups that share a layer are merged.
//! The remaining layers of each component are bundled, in order, into
//! component-specific groups of `layers_per_group` layers. Each layer (weight and
//! bias) lands in exactly one group, so the groups partition the parameters.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::netcore::{LayerInput, Network, ParamRole, TensorRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GroupKind {
    ComponentSpecific,
    Coupling,
}

impl GroupKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKind::ComponentSpecific => "component_specific",
            GroupKind::Coupling => "coupling",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "component_specific" => Some(GroupKind::ComponentSpecific),
            "coupling" => Some(GroupKind::Coupling),
            _ => None,
        }
    }
}

/// One whole tensor of a group. `units` is the size of its output-unit axis
/// (weight rows or bias entries) and `fan` the number of elements per unit.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MemberSlice {
    pub tensor: TensorRef,
    pub units: usize,
    pub fan: usize,
}

impl MemberSlice {
    pub fn numel(&self) -> usize {
        self.units * self.fan
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PruningGroup {
    pub id: String,
    pub kind: GroupKind,
    /// Layers whose weight and bias belong to this group, ascending.
    pub layers: Vec<usize>,
    pub members: Vec<MemberSlice>,
    pub param_count: usize,
    pub components: Vec<String>,
}

impl PruningGroup {
    pub fn tensors(&self) -> Vec<TensorRef> {
        self.members.iter().map(|m| m.tensor).collect()
    }
}

pub fn group_param_count(group: &PruningGroup) -> usize {
    group.members.iter().map(MemberSlice::numel).sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentGraph {
    pub components: Vec<(String, Range<usize>)>,
    pub groups: Vec<PruningGroup>,
    pub layers_per_group: usize,
    /// `layer_group[k]` is the index of the group holding layer `k`.
    layer_group: Vec<usize>,
}

impl ComponentGraph {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group_of_layer(&self, layer: usize) -> Option<usize> {
        self.layer_group.get(layer).copied()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.id == id)
    }

    pub fn total_params(&self) -> usize {
        self.groups.iter().map(|g| g.param_count).sum()
    }
}

pub fn build_groups(net: &Network, layers_per_group: usize) -> Result<ComponentGraph> {
    if layers_per_group == 0 {
        return Err(Error::Config("layers_per_group must be at least 1".into()));
    }
    let n = net.layers().len();
    let comps = net.components();
    let mut comp_of = vec![usize::MAX; n];
    for (ci, c) in comps.iter().enumerate() {
        if c.layers.is_empty() {
            return Err(Error::EmptyComponent(c.name.clone()));
        }
        for k in c.layers.clone() {
            comp_of[k] = ci;
        }
    }
    if comp_of.iter().any(|&c| c == usize::MAX) {
        return Err(Error::Config("component ranges do not cover every layer".into()));
    }

    // Every component must be reachable: some layer reads the data or another component.
    for (ci, c) in comps.iter().enumerate() {
        let fed = c.layers.clone().any(|k| match net.layers()[k].input {
            LayerInput::Data => true,
            LayerInput::Layer(src) => comp_of[src] != ci,
        });
        if !fed {
            return Err(Error::BoundaryLayerMissing(c.name.clone()));
        }
    }

    // Coupling sets: producer + cross-component consumers, merged when they overlap.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut coupled = vec![false; n];
    for (k, layer) in net.layers().iter().enumerate() {
        if let LayerInput::Layer(src) = layer.input {
            if comp_of[src] != comp_of[k] {
                coupled[src] = true;
                coupled[k] = true;
                let (a, b) = (find(&mut parent, src), find(&mut parent, k));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }

    let mut raw: Vec<(GroupKind, Vec<usize>)> = Vec::new();
    let mut seen_roots = BTreeSet::new();
    for k in 0..n {
        if coupled[k] {
            let root = find(&mut parent, k);
            if seen_roots.insert(root) {
                let members: Vec<usize> = (0..n).filter(|&j| coupled[j] && find(&mut parent, j) == root).collect();
                raw.push((GroupKind::Coupling, members));
            }
        }
    }
    for c in comps {
        let free: Vec<usize> = c.layers.clone().filter(|&k| !coupled[k]).collect();
        for chunk in free.chunks(layers_per_group) {
            raw.push((GroupKind::ComponentSpecific, chunk.to_vec()));
        }
    }
    // Manifest order follows the first layer of each group.
    raw.sort_by_key(|(_, layers)| layers[0]);

    let mut counters = vec![0usize; comps.len()];
    let mut groups = Vec::with_capacity(raw.len());
    let mut layer_group = vec![0; n];
    for (gi, (kind, layers)) in raw.into_iter().enumerate() {
        let mut owners: Vec<usize> = layers.iter().map(|&k| comp_of[k]).collect();
        owners.sort_unstable();
        owners.dedup();
        let names: Vec<String> = owners.iter().map(|&ci| comps[ci].name.clone()).collect();
        let id = match kind {
            GroupKind::Coupling => format!("coupling_{}", names.join("_")),
            GroupKind::ComponentSpecific => {
                let ci = owners[0];
                counters[ci] += 1;
                format!("{}_{}", comps[ci].name, counters[ci])
            }
        };
        let mut members = Vec::with_capacity(layers.len() * 2);
        for &k in &layers {
            let l = &net.layers()[k];
            members.push(MemberSlice {
                tensor: TensorRef { layer: k, role: ParamRole::Weight },
                units: l.out_dim(),
                fan: l.in_dim(),
            });
            members.push(MemberSlice {
                tensor: TensorRef { layer: k, role: ParamRole::Bias },
                units: l.out_dim(),
                fan: 1,
            });
            layer_group[k] = gi;
        }
        let mut group = PruningGroup { id, kind, layers, members, param_count: 0, components: names };
        group.param_count = group_param_count(&group);
        groups.push(group);
    }
    dedup_ids(&mut groups);

    Ok(ComponentGraph {
        components: comps.iter().map(|c| (c.name.clone(), c.layers.clone())).collect(),
        groups,
        layers_per_group,
        layer_group,
    })
}

// Two separate couplings between the same components would otherwise share an id.
fn dedup_ids(groups: &mut [PruningGroup]) {
    for i in 1..groups.len() {
        let clashes = groups[..i].iter().filter(|g| g.id == groups[i].id).count();
        if clashes > 0 {
            groups[i].id = format!("{}_{}", groups[i].id, clashes + 1);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Axis {
    /// Weight rows of the producing layer.
    Rows,
    /// Bias entries of the producing layer.
    Bias,
    /// Weight columns of a consuming layer.
    Cols,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SliceRemoval {
    pub layer: usize,
    pub axis: Axis,
    pub indices: Vec<usize>,
}

/// Every slice that must go when the given output units of `layer` are removed:
/// its weight rows and bias entries, plus the matching weight columns of every
/// layer that reads it (in any component).
pub fn dependency_closure(net: &Network, layer: usize, removed_units: &[usize]) -> Result<Vec<SliceRemoval>> {
    let l = net
        .layers()
        .get(layer)
        .ok_or_else(|| Error::Config(format!("layer {layer} does not exist")))?;
    let out = l.out_dim();
    let mut idx: Vec<usize> = removed_units.to_vec();
    idx.sort_unstable();
    idx.dedup();
    if let Some(&bad) = idx.iter().find(|&&u| u >= out) {
        return Err(Error::Config(format!("unit {bad} out of range for layer {layer} with {out} units")));
    }
    if idx.len() == out {
        return Err(Error::DegenerateLayer { layer });
    }
    if idx.is_empty() {
        return Ok(Vec::new());
    }
    let mut slices = vec![
        SliceRemoval { layer, axis: Axis::Rows, indices: idx.clone() },
        SliceRemoval { layer, axis: Axis::Bias, indices: idx.clone() },
    ];
    for c in net.consumers(layer) {
        slices.push(SliceRemoval { layer: c, axis: Axis::Cols, indices: idx.clone() });
    }
    Ok(slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn autoencoder_has_four_specific_and_one_coupling_group() {
        let net = presets::autoencoder(8, 0).unwrap();
        let g = build_groups(&net, 1).unwrap();
        let ids: Vec<&str> = g.groups.iter().map(|g| g.id.as_str()).collect();
        assert_eq!(ids, ["encoder_1", "encoder_2", "coupling_encoder_decoder", "decoder_1", "decoder_2"]);
        assert_eq!(g.groups.iter().filter(|g| g.kind == GroupKind::Coupling).count(), 1);
        assert_eq!(g.groups[2].layers, vec![2, 3]);
        assert_eq!(g.total_params(), net.param_count());
    }

    #[test]
    fn single_component_has_no_coupling() {
        let net = presets::mlp(&[4, 3, 2], 0).unwrap();
        let g = build_groups(&net, 1).unwrap();
        assert!(g.groups.iter().all(|g| g.kind == GroupKind::ComponentSpecific));
        assert_eq!(g.len(), 2);
        assert_eq!(g.groups[0].param_count, 15);
    }

    #[test]
    fn layers_per_group_bundles_consecutive_layers() {
        let net = presets::mlp(&[4, 3, 3, 3, 2], 0).unwrap();
        let g = build_groups(&net, 2).unwrap();
        assert_eq!(g.groups.iter().map(|g| g.layers.clone()).collect::<Vec<_>>(), vec![vec![0, 1], vec![2, 3]]);
        assert!(build_groups(&net, 0).is_err());
    }

    #[test]
    fn closure_of_chain_layer() {
        let net = presets::mlp(&[4, 3, 2], 0).unwrap();
        let c = dependency_closure(&net, 0, &[0]).unwrap();
        assert_eq!(
            c,
            vec![
                SliceRemoval { layer: 0, axis: Axis::Rows, indices: vec![0] },
                SliceRemoval { layer: 0, axis: Axis::Bias, indices: vec![0] },
                SliceRemoval { layer: 1, axis: Axis::Cols, indices: vec![0] },
            ]
        );
    }

    #[test]
    fn closure_of_last_layer_has_no_columns() {
        let net = presets::mlp(&[4, 3, 2], 0).unwrap();
        let c = dependency_closure(&net, 1, &[1]).unwrap();
        assert!(c.iter().all(|s| s.axis != Axis::Cols));
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn closure_refuses_to_empty_a_layer() {
        let net = presets::mlp(&[4, 3, 2], 0).unwrap();
        assert_eq!(dependency_closure(&net, 0, &[0, 1, 2]), Err(Error::DegenerateLayer { layer: 0 }));
        assert!(dependency_closure(&net, 0, &[3]).is_err());
    }
}
