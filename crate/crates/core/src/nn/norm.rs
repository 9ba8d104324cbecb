//! Per-channel batch normalization over N, H, W. Always computed in the
//! working type (binary32 under AMP).

use crate::error::{Error, Result};
use crate::exec;
use crate::numerics::{Real, Tensor};

use super::Mode;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub channels: usize,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub mode: Mode,
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<T>,
    /// Batch statistics (train mode only).
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Result<Self> {
        let gamma = Tensor::full(&[channels], T::one())?;
        Ok(BatchNorm {
            channels,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: gamma.clone(),
            gamma,
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, BnCache<T>)> {
        let [n, c, h, w] = x.dims4("BatchNorm input")?;
        if c != self.channels {
            return Err(Error::contract(format!(
                "BatchNorm over {} channels got {c}",
                self.channels
            )));
        }
        let plane = h * w;
        let xd = x.data();
        let eps = T::from_f64(self.eps);
        let (mean, var) = match mode {
            Mode::Train => {
                let count = T::from_f64((n * plane) as f64);
                let stats = exec::map_indices(c, |ch| {
                    let mut s = T::zero();
                    for b in 0..n {
                        for &v in &xd[(b * c + ch) * plane..][..plane] {
                            s += v;
                        }
                    }
                    let mean = s / count;
                    let mut q = T::zero();
                    for b in 0..n {
                        for &v in &xd[(b * c + ch) * plane..][..plane] {
                            let d = v - mean;
                            q += d * d;
                        }
                    }
                    (mean, q / count)
                });
                stats.into_iter().unzip()
            }
            Mode::Eval => (
                self.running_mean.data().to_vec(),
                self.running_var.data().to_vec(),
            ),
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

        let mut x_hat = Tensor::zeros(x.shape())?;
        exec::for_each_chunk_mut(x_hat.data_mut(), plane, |idx, o| {
            let ch = idx % c;
            let (m, s) = (mean[ch], inv_std[ch]);
            for (dst, &v) in o.iter_mut().zip(&xd[idx * plane..][..plane]) {
                *dst = (v - m) * s;
            }
        });
        let mut y = x_hat.clone();
        let (g, bt) = (self.gamma.data(), self.beta.data());
        exec::for_each_chunk_mut(y.data_mut(), plane, |idx, o| {
            let ch = idx % c;
            o.iter_mut().for_each(|v| *v = g[ch] * *v + bt[ch]);
        });
        let (mean, var) = match mode {
            Mode::Train => (mean, var),
            Mode::Eval => (Vec::new(), Vec::new()),
        };
        Ok((
            y,
            BnCache {
                mode,
                x_hat,
                inv_std,
                mean,
                var,
            },
        ))
    }

    /// Returns `(input_grad, gamma_grad, beta_grad)`.
    pub fn backward(
        &self,
        cache: &BnCache<T>,
        dy: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        if dy.shape() != cache.x_hat.shape() {
            return Err(Error::contract(format!(
                "BatchNorm backward: upstream {:?} vs cached {:?}",
                dy.shape(),
                cache.x_hat.shape()
            )));
        }
        let [n, c, h, w] = dy.dims4("BatchNorm upstream")?;
        let plane = h * w;
        let (gd, xh) = (dy.data(), cache.x_hat.data());
        let sums = exec::map_indices(c, |ch| {
            let (mut s, mut sx) = (T::zero(), T::zero());
            for b in 0..n {
                let off = (b * c + ch) * plane;
                for (&g, &xv) in gd[off..off + plane].iter().zip(&xh[off..off + plane]) {
                    s += g;
                    sx += g * xv;
                }
            }
            (s, sx)
        });
        let dbeta: Vec<T> = sums.iter().map(|s| s.0).collect();
        let dgamma: Vec<T> = sums.iter().map(|s| s.1).collect();
        let gamma = self.gamma.data();
        let inv_std = &cache.inv_std;
        let count = T::from_f64((n * plane) as f64);

        let mut dx = Tensor::zeros(dy.shape())?;
        exec::for_each_chunk_mut(dx.data_mut(), plane, |idx, o| {
            let ch = idx % c;
            let off = idx * plane;
            let (g, xv) = (&gd[off..off + plane], &xh[off..off + plane]);
            match cache.mode {
                Mode::Train => {
                    let k = gamma[ch] * inv_std[ch] / count;
                    let (s, sx) = sums[ch];
                    for ((dst, &gi), &xi) in o.iter_mut().zip(g).zip(xv) {
                        *dst = k * (count * gi - s - xi * sx);
                    }
                }
                Mode::Eval => {
                    let k = gamma[ch] * inv_std[ch];
                    for (dst, &gi) in o.iter_mut().zip(g) {
                        *dst = k * gi;
                    }
                }
            }
        });
        Ok((
            dx,
            Tensor::from_vec(&[c], dgamma)?,
            Tensor::from_vec(&[c], dbeta)?,
        ))
    }

    /// Exponential moving average update of the running statistics.
    pub fn update_running(&mut self, mean: &[T], var: &[T]) -> Result<()> {
        if mean.len() != self.channels || var.len() != self.channels {
            return Err(Error::contract("BatchNorm running-stat update has wrong length"));
        }
        let m = T::from_f64(self.momentum);
        let one_m = T::from_f64(1.0 - self.momentum);
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(mean) {
            *r = m * *r + one_m * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(var) {
            *r = m * *r + one_m * b;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_batch_maps_to_beta() {
        let mut bn = BatchNorm::<f32>::new(2).unwrap();
        bn.gamma.data_mut().copy_from_slice(&[3.0, -2.0]);
        bn.beta.data_mut().copy_from_slice(&[0.25, 7.0]);
        let x = Tensor::full(&[3, 2, 2, 2], 5.0f32).unwrap();
        let (y, cache) = bn.forward(&x, Mode::Train).unwrap();
        for b in 0..3 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(y.at4(b, 0, i, j), 0.25);
                    assert_eq!(y.at4(b, 1, i, j), 7.0);
                }
            }
        }
        assert_eq!(cache.mean, vec![5.0, 5.0]);
        assert_eq!(cache.var, vec![0.0, 0.0]);
    }

    #[test]
    fn train_output_is_standardized() {
        let bn = BatchNorm::<f64>::new(1).unwrap();
        let x = Tensor::from_vec(&[2, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        let mean: f64 = y.data().iter().sum::<f64>() / 4.0;
        let var: f64 = y.data().iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.25 / (1.25 + 1e-5)).abs() < 1e-12);
    }

    #[test]
    fn eval_uses_running_stats_per_sample() {
        let mut bn = BatchNorm::<f64>::new(1).unwrap();
        bn.running_mean.data_mut()[0] = 2.0;
        bn.running_var.data_mut()[0] = 4.0 - 1e-5;
        let x = Tensor::from_vec(&[2, 1, 1, 1], vec![4.0, 0.0]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Eval).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!((y.data()[1] + 1.0).abs() < 1e-12);
        let single = Tensor::from_vec(&[1, 1, 1, 1], vec![4.0]).unwrap();
        assert_eq!(bn.forward(&single, Mode::Eval).unwrap().0.data()[0], y.data()[0]);
    }

    #[test]
    fn running_update() {
        let mut bn = BatchNorm::<f64>::new(1).unwrap();
        bn.update_running(&[1.0], &[3.0]).unwrap();
        assert!((bn.running_mean.data()[0] - 0.01).abs() < 1e-15);
        assert!((bn.running_var.data()[0] - (0.99 + 0.03)).abs() < 1e-15);
        assert!(bn.update_running(&[1.0, 2.0], &[1.0]).is_err());
    }
}
