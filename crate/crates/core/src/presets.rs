//! Ready-made architectures.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::netcore::{Activation, Component, LayerInput, LayerSpec, Network};

/// Hidden widths of the desk-scale autoencoder around the latent layer.
pub const AUTOENCODER_HIDDEN: [usize; 2] = [256, 128];
pub const IMAGE_PIXELS: usize = 784;

/// `784 -> 256 -> 128 -> latent -> 128 -> 256 -> 784`, ReLU hidden units, linear
/// latent code and sigmoid reconstruction. Encoder = layers 0..3, decoder = 3..6.
pub fn autoencoder(latent_dim: usize, seed: u64) -> Result<Network> {
    autoencoder_with(IMAGE_PIXELS, &AUTOENCODER_HIDDEN, latent_dim, seed)
}

pub fn autoencoder_with(input: usize, hidden: &[usize], latent_dim: usize, seed: u64) -> Result<Network> {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(latent_dim);
    dims.extend(hidden.iter().rev());
    dims.push(input);
    let enc_layers = hidden.len() + 1;
    let total = dims.len() - 1;
    let specs: Vec<LayerSpec> = (0..total)
        .map(|k| {
            let activation = if k == enc_layers - 1 {
                Activation::Identity
            } else if k == total - 1 {
                Activation::Sigmoid
            } else {
                Activation::Relu
            };
            let (name, idx) = if k < enc_layers { ("encoder", k) } else { ("decoder", k - enc_layers) };
            LayerSpec::new(format!("{name}.{idx}"), dims[k], dims[k + 1], activation, chain_input(k))
        })
        .collect();
    let comps = vec![Component::new("encoder", 0..enc_layers), Component::new("decoder", enc_layers..total)];
    Network::seeded(&specs, comps, seed)
}

/// Shared encoder `16 -> 32 -> 8` feeding two heads `8 -> 16 -> 1`.
pub fn toy_multihead(seed: u64) -> Result<Network> {
    let specs = [
        LayerSpec::new("encoder.0", 16, 32, Activation::Relu, LayerInput::Data),
        LayerSpec::new("encoder.1", 32, 8, Activation::Relu, LayerInput::Layer(0)),
        LayerSpec::new("head_a.0", 8, 16, Activation::Relu, LayerInput::Layer(1)),
        LayerSpec::new("head_a.1", 16, 1, Activation::Identity, LayerInput::Layer(2)),
        LayerSpec::new("head_b.0", 8, 16, Activation::Relu, LayerInput::Layer(1)),
        LayerSpec::new("head_b.1", 16, 1, Activation::Identity, LayerInput::Layer(4)),
    ];
    let comps = vec![
        Component::new("encoder", 0..2),
        Component::new("head_a", 2..4),
        Component::new("head_b", 4..6),
    ];
    Network::seeded(&specs, comps, seed)
}

/// Single-component chain with ReLU hidden layers and a linear output.
pub fn mlp(dims: &[usize], seed: u64) -> Result<Network> {
    mlp_with(dims, Activation::Relu, seed)
}

pub fn mlp_with(dims: &[usize], hidden: Activation, seed: u64) -> Result<Network> {
    let total = dims.len().saturating_sub(1);
    let specs: Vec<LayerSpec> = (0..total)
        .map(|k| {
            let act = if k + 1 == total { Activation::Identity } else { hidden };
            LayerSpec::new(format!("mlp.{k}"), dims[k], dims[k + 1], act, chain_input(k))
        })
        .collect();
    Network::seeded(&specs, vec![Component::new("mlp", 0..total)], seed)
}

fn chain_input(k: usize) -> LayerInput {
    if k == 0 {
        LayerInput::Data
    } else {
        LayerInput::Layer(k - 1)
    }
}
