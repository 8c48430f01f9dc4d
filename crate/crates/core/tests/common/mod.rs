#![allow(dead_code)]

use prunescope_core::netcore::{Activation, Component, LayerInput, LayerSpec, Network, ParamIndex, ParamRole, TensorRef};
use prunescope_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn activation(rng: &mut ChaCha8Rng) -> Activation {
    [Activation::Relu, Activation::Sigmoid, Activation::Identity][rng.gen_range(0..3)]
}

/// Three-layer chain with random widths and activations, split into two components.
pub fn random_chain(seed: u64) -> Network {
    let mut r = rng(seed);
    let dims: Vec<usize> = (0..4).map(|_| r.gen_range(2..7)).collect();
    let specs: Vec<LayerSpec> = (0..3)
        .map(|k| {
            let input = if k == 0 { LayerInput::Data } else { LayerInput::Layer(k - 1) };
            LayerSpec::new(format!("l{k}"), dims[k], dims[k + 1], activation(&mut r), input)
        })
        .collect();
    Network::seeded(&specs, vec![Component::new("a", 0..1), Component::new("b", 1..3)], seed).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Every scalar parameter of `net`.
pub fn all_params(net: &Network) -> Vec<ParamIndex> {
    net.tensor_refs()
        .into_iter()
        .flat_map(|t| (0..net.tensor(t).len()).map(move |offset| ParamIndex { tensor: t, offset }))
        .collect()
}

pub fn weight(layer: usize) -> TensorRef {
    TensorRef { layer, role: ParamRole::Weight }
}

pub fn bias(layer: usize) -> TensorRef {
    TensorRef { layer, role: ParamRole::Bias }
}

pub fn rel_err(a: f64, fd: f64) -> f64 {
    (a - fd).abs() / fd.abs().max(1.0)
}

/// Mean of |g| and of g², accumulated one element at a time in f64.
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

/// The original network with the given units silenced: their weight rows and
/// biases and every consumer column that reads them are set to zero.
pub fn masked_original(net: &Network, removed: &std::collections::BTreeMap<usize, Vec<usize>>) -> Network {
    let mut masked = net.clone();
    for (&layer, units) in removed {
        let consumers = net.consumers(layer);
        let in_dim = net.layers()[layer].in_dim();
        let l = &mut masked.layers_mut()[layer];
        for &u in units {
            l.weight.values_mut()[u * in_dim..(u + 1) * in_dim].iter_mut().for_each(|v| *v = 0.0);
            l.bias.values_mut()[u] = 0.0;
        }
        for c in consumers {
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
