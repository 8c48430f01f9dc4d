use super::{Network, ParamIndex};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::netcore::mse_loss;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Central finite difference `(L(θ+h) - L(θ-h)) / 2h` of the batch-mean MSE with
/// respect to one parameter. `penalty`, when given, is added to the loss (the L1
/// term during regularized training).
pub fn fd_gradient(
    net: &Network,
    batch: &Matrix,
    target: &Matrix,
    param: ParamIndex,
    penalty: Option<&dyn Fn(&Network) -> f64>,
) -> Result<f64> {
    fd_gradient_with(net, param, |probe| {
        let out = probe.forward(batch)?.output;
        let (task, _) = mse_loss(&out, target)?;
        Ok(task + penalty.map_or(0.0, |p| p(probe)))
    })
}

/// Central finite difference of an arbitrary scalar loss.
pub fn fd_gradient_with<F>(net: &Network, param: ParamIndex, loss: F) -> Result<f64>
where
    F: Fn(&Network) -> Result<f64>,
{
    let mut probe = net.clone();
    let base = probe.tensor(param.tensor).values()[param.offset];
    probe.tensor_mut(param.tensor).values_mut()[param.offset] = base + FD_STEP;
    let plus = loss(&probe)?;
    probe.tensor_mut(param.tensor).values_mut()[param.offset] = base - FD_STEP;
    let minus = loss(&probe)?;
    Ok((plus - minus) / (2.0 * FD_STEP))
}
