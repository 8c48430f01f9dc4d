use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Network;
use crate::error::{Error, Result};

pub trait Optimizer {
    /// Applies one update from the gradients currently stored in `net`.
    fn step(&mut self, net: &mut Network) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, net: &mut Network) -> Result<()> {
        for r in net.tensor_refs() {
            let t = net.tensor_mut(r);
            let name_ok = {
                let (values, grad) = (&mut t.values, &t.grad);
                let mut ok = true;
                for (v, &g) in values.iter_mut().zip(grad) {
                    *v -= self.lr * g;
                    ok &= v.is_finite();
                }
                ok
            };
            if !name_ok {
                return Err(Error::NonFinite { context: format!("{} after SGD step", t.name) });
            }
        }
        Ok(())
    }
}

/// Adam with bias correction. Moment buffers are created on the first step and
/// keyed by tensor position; a network whose shapes changed needs a fresh `Adam`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(1e-3, 0.9, 0.999, 1e-8)
    }
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, t: 0, moments: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

impl Optimizer for Adam {
    fn step(&mut self, net: &mut Network) -> Result<()> {
        let refs = net.tensor_refs();
        if self.moments.is_empty() {
            self.moments = refs
                .iter()
                .map(|&r| {
                    let n = net.tensor(r).len();
                    (vec![0.0; n], vec![0.0; n])
                })
                .collect();
        }
        if self.moments.len() != refs.len()
            || refs.iter().zip(&self.moments).any(|(&r, (m, _))| net.tensor(r).len() != m.len())
        {
            return Err(Error::Mismatch("Adam state does not match network shapes".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for (&r, (m, v)) in refs.iter().zip(self.moments.iter_mut()) {
            let t = net.tensor_mut(r);
            let mut ok = true;
            for (((p, &g), mi), vi) in t.values.iter_mut().zip(&t.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
                ok &= p.is_finite();
            }
            if !ok {
                return Err(Error::NonFinite { context: format!("{} after Adam step", t.name) });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::netcore::{Activation, Component, DenseLayer, LayerInput};

    fn scalar_net(w: f64, g: f64) -> Network {
        let mut layer = DenseLayer::new(
            "l",
            Matrix::from_vec(1, 1, vec![w]).unwrap(),
            vec![0.0],
            Activation::Identity,
            LayerInput::Data,
        )
        .unwrap();
        layer.weight.grad_mut()[0] = g;
        Network::new(vec![layer], vec![Component::new("c", 0..1)]).unwrap()
    }

    #[test]
    fn sgd_zero_grad_is_noop() {
        let mut net = scalar_net(1.25, 0.0);
        let before = net.clone();
        Sgd { lr: 0.1 }.step(&mut net).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn sgd_hand_step() {
        let mut net = scalar_net(1.0, 2.0);
        Sgd { lr: 0.1 }.step(&mut net).unwrap();
        assert!((net.layers()[0].weight.values()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_matches_recurrence() {
        // m = 0.1 g, v = 0.001 g^2, m_hat = g, v_hat = g^2 -> dw = -lr g / (|g| + eps)
        let g = 0.37;
        let mut net = scalar_net(0.5, g);
        let mut adam = Adam::default();
        adam.step(&mut net).unwrap();
        let m = (1.0 - 0.9) * g;
        let v = (1.0 - 0.999) * g * g;
        let m_hat = m / (1.0 - 0.9);
        let v_hat = v / (1.0 - 0.999);
        let expected = 0.5 - 1e-3 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((net.layers()[0].weight.values()[0] - expected).abs() < 1e-15);
        assert!(net.layers()[0].weight.values()[0] < 0.5);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn non_finite_update_is_an_error() {
        let mut net = scalar_net(1.0, f64::INFINITY);
        assert!(matches!(Sgd { lr: 1.0 }.step(&mut net), Err(Error::NonFinite { .. })));
    }
}
