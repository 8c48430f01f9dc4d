#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, Output};

use prunescope::core::importance::Metric;
use prunescope::core::modelgraph::ComponentGraph;
use prunescope::core::netcore::{Activation, Component, LayerInput, LayerSpec, Network};
use prunescope::core::pruner::{prunable_layers, PrunePlan, UnitRemoval};
use prunescope::core::Matrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_prunescope"));
    c.env_remove("PRUNESCOPE_SEED");
    c
}

pub fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

pub fn random_matrix(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rel_err(a: f64, fd: f64) -> f64 {
    (a - fd).abs() / fd.abs().max(1.0)
}

/// Three dense layers with random widths and activations.
pub fn random_three_layer(seed: u64) -> Network {
    let mut r = rng(seed);
    let dims: Vec<usize> = (0..4).map(|_| r.gen_range(2..8)).collect();
    let acts = [Activation::Relu, Activation::Sigmoid, Activation::Identity];
    let specs: Vec<LayerSpec> = (0..3)
        .map(|k| {
            let input = if k == 0 { LayerInput::Data } else { LayerInput::Layer(k - 1) };
            LayerSpec::new(format!("l{k}"), dims[k], dims[k + 1], acts[r.gen_range(0..3)], input)
        })
        .collect();
    Network::seeded(&specs, vec![Component::new("a", 0..1), Component::new("b", 1..3)], seed).unwrap()
}

/// A random chain or trunk-and-heads network whose hidden layers use `hidden`.
pub fn random_net(r: &mut ChaCha8Rng, hidden: Activation) -> Network {
    if r.gen_bool(0.3) {
        let w: Vec<usize> = (0..5).map(|_| r.gen_range(2..8)).collect();
        let specs = [
            LayerSpec::new("t0", w[0], w[1], hidden, LayerInput::Data),
            LayerSpec::new("t1", w[1], w[2], hidden, LayerInput::Layer(0)),
            LayerSpec::new("a0", w[2], w[3], hidden, LayerInput::Layer(1)),
            LayerSpec::new("a1", w[3], 1, Activation::Identity, LayerInput::Layer(2)),
            LayerSpec::new("b0", w[2], w[4], hidden, LayerInput::Layer(1)),
            LayerSpec::new("b1", w[4], 2, Activation::Identity, LayerInput::Layer(4)),
        ];
        let comps = vec![Component::new("trunk", 0..2), Component::new("a", 2..4), Component::new("b", 4..6)];
        return Network::seeded(&specs, comps, r.gen()).unwrap();
    }
    let depth = r.gen_range(2..6);
    let dims: Vec<usize> = (0..=depth).map(|_| r.gen_range(2..9)).collect();
    let specs: Vec<LayerSpec> = (0..depth)
        .map(|k| {
            let act = if k + 1 == depth { Activation::Identity } else { hidden };
            let input = if k == 0 { LayerInput::Data } else { LayerInput::Layer(k - 1) };
            LayerSpec::new(format!("l{k}"), dims[k], dims[k + 1], act, input)
        })
        .collect();
    let split = r.gen_range(1..depth);
    Network::seeded(&specs, vec![Component::new("enc", 0..split), Component::new("dec", split..depth)], r.gen()).unwrap()
}

/// Random unit subsets of random prunable layers, never a whole layer.
pub fn random_plan(net: &Network, graph: &ComponentGraph, r: &mut ChaCha8Rng) -> PrunePlan {
    let mut plan = PrunePlan::empty(graph, Metric::Grad);
    for k in prunable_layers(net) {
        if r.gen_bool(0.3) {
            continue;
        }
        let out = net.layers()[k].out_dim();
        let mut units: Vec<usize> = (0..out).collect();
        units.shuffle(r);
        units.truncate(r.gen_range(0..out));
        units.sort_unstable();
        if units.is_empty() {
            continue;
        }
        let g = &graph.groups[graph.group_of_layer(k).unwrap()];
        let entry = plan.per_group.entry(g.id.clone()).or_default();
        entry.units_removed += units.len();
        entry.removals.push(UnitRemoval { layer: k, units });
    }
    plan
}

/// The original network with the removed units silenced: weight rows, biases
/// and every consumer column reading them set to zero.
pub fn masked_original(net: &Network, removed: &BTreeMap<usize, Vec<usize>>) -> Network {
    let mut masked = net.clone();
    for (&layer, units) in removed {
        let in_dim = net.layers()[layer].in_dim();
        let l = &mut masked.layers_mut()[layer];
        for &u in units {
            l.weight.values_mut()[u * in_dim..(u + 1) * in_dim].iter_mut().for_each(|v| *v = 0.0);
            l.bias.values_mut()[u] = 0.0;
        }
        for c in net.consumers(layer) {
            let cin = net.layers()[c].in_dim();
            let cl = &mut masked.layers_mut()[c];
            for o in 0..cl.out_dim() {
                for &u in units {
                    cl.weight.values_mut()[o * cin + u] = 0.0;
                }
            }
        }
    }
    masked
}

/// Distinct parameter positions silenced by `masked_original`.
pub fn masked_positions(net: &Network, removed: &BTreeMap<usize, Vec<usize>>) -> usize {
    let mut set = BTreeSet::new();
    for (&k, units) in removed {
        let in_dim = net.layers()[k].in_dim();
        for &u in units {
            for i in 0..in_dim {
                set.insert((k, 0, u * in_dim + i));
            }
            set.insert((k, 1, u));
        }
        for c in net.consumers(k) {
            let cin = net.layers()[c].in_dim();
            for o in 0..net.layers()[c].out_dim() {
                for &u in units {
                    set.insert((c, 0, o * cin + u));
                }
            }
        }
    }
    set.len()
}

/// Mean |g| and mean g², one element at a time.
pub fn brute_metrics(group: &[Vec<f64>]) -> (f64, f64) {
    let mut n = 0usize;
    let (mut abs, mut sq) = (0.0, 0.0);
    for t in group {
        for &g in t {
            n += 1;
            abs += g.abs();
            sq += g * g;
        }
    }
    (abs / n as f64, sq / n as f64)
}

pub fn mnist_dir() -> Option<std::path::PathBuf> {
    let dir = std::env::var_os("PRUNESCOPE_MNIST_DIR")
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.join("train-images-idx3-ubyte").is_file().then_some(dir)
}
