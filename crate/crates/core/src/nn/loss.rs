use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Mean squared error over every element, and its gradient w.r.t. `pred`
/// multiplied by `grad_scale` (the loss scale under AMP, otherwise 1).
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, grad_scale: T) -> Result<(T, Tensor<T>)> {
    if !pred.same_shape(target) {
        return Err(Error::contract(format!(
            "loss: prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = T::from_f64(pred.len() as f64);
    let mut sum = T::zero();
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        sum += d * d;
    }
    let k = T::from_f64(2.0) / n;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| k * (p - t) * grad_scale)
        .collect();
    Ok((sum / n, Tensor::from_vec(pred.shape(), grad)?))
}
