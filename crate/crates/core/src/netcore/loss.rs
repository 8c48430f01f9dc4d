use alloc::format;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Mean squared error over every element, with its gradient `2 (pred - target) / numel`.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.rows() != target.rows() || pred.cols() != target.cols() {
        return Err(Error::Config(format!(
            "prediction is {}x{}, target is {}x{}",
            pred.rows(),
            pred.cols(),
            target.rows(),
            target.cols()
        )));
    }
    let n = pred.as_slice().len();
    if n == 0 {
        return Err(Error::Config("empty prediction".into()));
    }
    let scale = 2.0 / n as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut sum = 0.0;
    for ((g, &p), &t) in grad.as_mut_slice().iter_mut().zip(pred.as_slice()).zip(target.as_slice()) {
        let r = p - t;
        sum += r * r;
        *g = scale * r;
    }
    Ok((sum / n as f64, grad))
}
