//! Checkpoints: JSON with weights stored as base64 little-endian f64, so a
//! save/load cycle is bit-exact.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use prunescope_core::importance::UnitScores;
use prunescope_core::modelgraph::{build_groups, ComponentGraph};
use prunescope_core::netcore::{Activation, Component, DenseLayer, LayerInput, Network};
use prunescope_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

pub const FORMAT: &str = "prunescope-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub input: LayerInput,
    pub weight: String,
    pub bias: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub layers_per_group: usize,
    pub components: Vec<ComponentRecord>,
    pub layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_scores: Option<UnitScores>,
    /// Epochs of training behind these weights, summed over runs.
    #[serde(default)]
    pub epochs_trained: usize,
}

pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str, expected: usize, what: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD.decode(text).map_err(|e| AppError::Checkpoint(format!("{what}: {e}")))?;
    if bytes.len() != expected * 8 {
        return Err(AppError::Checkpoint(format!("{what}: {} bytes for {expected} values", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

impl Checkpoint {
    pub fn from_network(net: &Network, layers_per_group: usize, unit_scores: Option<UnitScores>, epochs_trained: usize) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| LayerRecord {
                name: l.weight.name.strip_suffix(".weight").unwrap_or(&l.weight.name).to_string(),
                in_dim: l.in_dim(),
                out_dim: l.out_dim(),
                activation: l.activation,
                input: l.input,
                weight: encode_f64s(l.weight.values()),
                bias: encode_f64s(l.bias.values()),
            })
            .collect();
        let components = net
            .components()
            .iter()
            .map(|c| ComponentRecord { name: c.name.clone(), start: c.layers.start, end: c.layers.end })
            .collect();
        Self { format: FORMAT.into(), version: VERSION, layers_per_group, components, layers, unit_scores, epochs_trained }
    }

    pub fn network(&self) -> Result<Network> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(AppError::Checkpoint(format!("unsupported format {} v{}", self.format, self.version)));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let w = decode_f64s(&l.weight, l.in_dim * l.out_dim, &format!("{}.weight", l.name))?;
            let b = decode_f64s(&l.bias, l.out_dim, &format!("{}.bias", l.name))?;
            layers.push(DenseLayer::new(&l.name, Matrix::from_vec(l.out_dim, l.in_dim, w)?, b, l.activation, l.input)?);
        }
        let components = self.components.iter().map(|c| Component::new(c.name.clone(), c.start..c.end)).collect();
        let net = Network::new(layers, components)?;
        if let Some(u) = &self.unit_scores {
            let fits = u.layers.len() == net.layers().len() && u.layers.iter().zip(net.layers()).all(|(s, l)| s.len() == l.out_dim());
            if !fits {
                return Err(AppError::Checkpoint("unit scores do not match the layer shapes".into()));
            }
        }
        Ok(net)
    }

    pub fn graph(&self, net: &Network) -> Result<ComponentGraph> {
        Ok(build_groups(net, self.layers_per_group)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::error::write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::error::read_json(path.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use prunescope_core::presets;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut net = presets::toy_multihead(11).unwrap();
        net.layers_mut()[0].weight.values_mut()[0] = -0.0;
        net.layers_mut()[0].weight.values_mut()[1] = f64::MIN_POSITIVE / 3.0;
        let scores = UnitScores::new(&net);
        let ck = Checkpoint::from_network(&net, 1, Some(scores), 4);
        let text = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint = serde_json::from_str(&text).unwrap();
        let net2 = back.network().unwrap();
        assert_eq!(net2, net);
        for (a, b) in net.layers().iter().zip(net2.layers()) {
            let bits = |l: &DenseLayer| l.weight.values().iter().chain(l.bias.values()).map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back.epochs_trained, 4);
    }

    #[test]
    fn corrupt_payload_is_rejected() {
        let net = presets::mlp(&[2, 3, 1], 0).unwrap();
        let mut ck = Checkpoint::from_network(&net, 1, None, 0);
        ck.layers[0].weight = encode_f64s(&[1.0]);
        assert!(ck.network().is_err());
        let mut ck = Checkpoint::from_network(&net, 1, None, 0);
        ck.layers[1].in_dim = 2;
        ck.layers[1].weight = encode_f64s(&[1.0, 2.0]);
        assert!(ck.network().is_err());
        let mut ck = Checkpoint::from_network(&net, 1, None, 0);
        ck.version = 99;
        assert!(ck.network().is_err());
    }
}
