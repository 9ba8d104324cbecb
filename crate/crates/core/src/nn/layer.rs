use crate::amp::{OpKind, PrecisionPolicy};
use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

use super::conv::{Conv2d, ConvCache, ConvTranspose2d};
use super::norm::{BatchNorm, BnCache};
use super::simple::{self, PoolCache};
use super::Mode;

/// One node operation of the U-Net layer graph.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    ConvTranspose2d(ConvTranspose2d<T>),
    BatchNorm(BatchNorm<T>),
    Relu,
    MaxPool2,
    /// Channel concatenation of `[skip, upsampled]`.
    Concat,
    /// 1×1 convolution with linear activation producing the forecast frames.
    FinalConv(Conv2d<T>),
}

#[derive(Debug, Clone)]
pub enum LayerCache<T> {
    Conv(ConvCache<T>),
    BatchNorm(BnCache<T>),
    Relu(Tensor<T>),
    MaxPool(PoolCache),
    Concat { split: usize },
}

pub type ParamGrads<T> = Vec<(&'static str, Tensor<T>)>;

impl<T: Real> Layer<T> {
    pub fn final_conv(c_in: usize, c_out: usize) -> Result<Self> {
        Ok(Layer::FinalConv(Conv2d::new(1, c_in, c_out)?))
    }

    pub fn kind(&self) -> OpKind {
        match self {
            Layer::Conv2d(_) => OpKind::Conv2d,
            Layer::ConvTranspose2d(_) => OpKind::ConvTranspose2d,
            Layer::BatchNorm(_) => OpKind::BatchNorm,
            Layer::Relu => OpKind::Relu,
            Layer::MaxPool2 => OpKind::MaxPool2,
            Layer::Concat => OpKind::Concat,
            Layer::FinalConv(_) => OpKind::FinalConv,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Layer::Concat => 2,
            _ => 1,
        }
    }

    /// Binary16 kernels exist only for the convolution-type layers; other
    /// kinds always run in the working type.
    fn f16(&self, policy: &PrecisionPolicy) -> bool {
        matches!(
            self,
            Layer::Conv2d(_) | Layer::ConvTranspose2d(_) | Layer::FinalConv(_)
        ) && policy.runs_in_f16(self.kind())
    }

    pub fn forward(
        &self,
        inputs: &[&Tensor<T>],
        mode: Mode,
        policy: &PrecisionPolicy,
    ) -> Result<(Tensor<T>, LayerCache<T>)> {
        if inputs.len() != self.arity() {
            return Err(Error::contract(format!(
                "{:?} takes {} input(s), got {}",
                self.kind(),
                self.arity(),
                inputs.len()
            )));
        }
        let f16 = self.f16(policy);
        let x = inputs[0];
        Ok(match self {
            Layer::Conv2d(c) | Layer::FinalConv(c) => {
                let (y, cache) = c.forward(x, f16)?;
                (y, LayerCache::Conv(cache))
            }
            Layer::ConvTranspose2d(c) => {
                let (y, cache) = c.forward(x, f16)?;
                (y, LayerCache::Conv(cache))
            }
            Layer::BatchNorm(bn) => {
                let (y, cache) = bn.forward(x, mode)?;
                (y, LayerCache::BatchNorm(cache))
            }
            Layer::Relu => (simple::relu_forward(x), LayerCache::Relu(x.clone())),
            Layer::MaxPool2 => {
                let (y, cache) = simple::maxpool2_forward(x)?;
                (y, LayerCache::MaxPool(cache))
            }
            Layer::Concat => {
                let y = simple::concat_forward(x, inputs[1])?;
                let split = x.shape()[1];
                (y, LayerCache::Concat { split })
            }
        })
    }

    /// Returns one gradient per input plus the parameter gradients by slot name.
    pub fn backward(
        &self,
        cache: &LayerCache<T>,
        dy: &Tensor<T>,
        policy: &PrecisionPolicy,
    ) -> Result<(Vec<Tensor<T>>, ParamGrads<T>)> {
        let f16 = self.f16(policy);
        let stale = || {
            Error::contract(format!(
                "{:?} backward received a cache from a different layer type",
                self.kind()
            ))
        };
        Ok(match (self, cache) {
            (Layer::Conv2d(c) | Layer::FinalConv(c), LayerCache::Conv(cc)) => {
                let (dx, dw, db) = c.backward(cc, dy, f16)?;
                (vec![dx], vec![("weight", dw), ("bias", db)])
            }
            (Layer::ConvTranspose2d(c), LayerCache::Conv(cc)) => {
                let (dx, dw, db) = c.backward(cc, dy, f16)?;
                (vec![dx], vec![("weight", dw), ("bias", db)])
            }
            (Layer::BatchNorm(bn), LayerCache::BatchNorm(bc)) => {
                let (dx, dg, db) = bn.backward(bc, dy)?;
                (vec![dx], vec![("gamma", dg), ("beta", db)])
            }
            (Layer::Relu, LayerCache::Relu(input)) => {
                (vec![simple::relu_backward(input, dy)?], Vec::new())
            }
            (Layer::MaxPool2, LayerCache::MaxPool(pc)) => {
                (vec![simple::maxpool2_backward(pc, dy)?], Vec::new())
            }
            (Layer::Concat, LayerCache::Concat { split }) => {
                let (a, b) = simple::concat_backward(*split, dy)?;
                (vec![a, b], Vec::new())
            }
            _ => return Err(stale()),
        })
    }

    /// Trainable parameters by slot name.
    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::Conv2d(c) | Layer::FinalConv(c) => vec![("weight", &c.weight), ("bias", &c.bias)],
            Layer::ConvTranspose2d(c) => vec![("weight", &c.weight), ("bias", &c.bias)],
            Layer::BatchNorm(bn) => vec![("gamma", &bn.gamma), ("beta", &bn.beta)],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::Conv2d(c) | Layer::FinalConv(c) => {
                vec![("weight", &mut c.weight), ("bias", &mut c.bias)]
            }
            Layer::ConvTranspose2d(c) => vec![("weight", &mut c.weight), ("bias", &mut c.bias)],
            Layer::BatchNorm(bn) => vec![("gamma", &mut bn.gamma), ("beta", &mut bn.beta)],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state (BatchNorm running statistics).
    pub fn buffers(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::BatchNorm(bn) => vec![
                ("running_mean", &bn.running_mean),
                ("running_var", &bn.running_var),
            ],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::BatchNorm(bn) => vec![
                ("running_mean", &mut bn.running_mean),
                ("running_var", &mut bn.running_var),
            ],
            _ => Vec::new(),
        }
    }

    /// Output shape for an input shape, without running the layer.
    pub fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        let s = inputs
            .first()
            .ok_or_else(|| Error::contract("layer needs an input shape"))?;
        if s.len() != 4 {
            return Err(Error::contract("layers operate on rank-4 tensors"));
        }
        Ok(match self {
            Layer::Conv2d(c) | Layer::FinalConv(c) => vec![s[0], c.c_out, s[2], s[3]],
            Layer::ConvTranspose2d(c) => vec![s[0], c.c_out, 2 * s[2], 2 * s[3]],
            Layer::BatchNorm(_) | Layer::Relu => s.to_vec(),
            Layer::MaxPool2 => {
                if s[2] % 2 != 0 || s[3] % 2 != 0 {
                    return Err(Error::contract("MaxPool2 needs even H and W"));
                }
                vec![s[0], s[1], s[2] / 2, s[3] / 2]
            }
            Layer::Concat => {
                let b = inputs
                    .get(1)
                    .ok_or_else(|| Error::contract("Concat needs two input shapes"))?;
                vec![s[0], s[1] + b[1], s[2], s[3]]
            }
        })
    }

    pub fn cast<U: Real>(&self) -> Layer<U> {
        match self {
            Layer::Conv2d(c) => Layer::Conv2d(cast_conv(c)),
            Layer::FinalConv(c) => Layer::FinalConv(cast_conv(c)),
            Layer::ConvTranspose2d(c) => Layer::ConvTranspose2d(ConvTranspose2d {
                c_in: c.c_in,
                c_out: c.c_out,
                weight: c.weight.cast(),
                bias: c.bias.cast(),
            }),
            Layer::BatchNorm(bn) => Layer::BatchNorm(BatchNorm {
                channels: bn.channels,
                gamma: bn.gamma.cast(),
                beta: bn.beta.cast(),
                running_mean: bn.running_mean.cast(),
                running_var: bn.running_var.cast(),
                eps: bn.eps,
                momentum: bn.momentum,
            }),
            Layer::Relu => Layer::Relu,
            Layer::MaxPool2 => Layer::MaxPool2,
            Layer::Concat => Layer::Concat,
        }
    }
}

fn cast_conv<T: Real, U: Real>(c: &Conv2d<T>) -> Conv2d<U> {
    Conv2d {
        kernel: c.kernel,
        c_in: c.c_in,
        c_out: c.c_out,
        weight: c.weight.cast(),
        bias: c.bias.cast(),
    }
}
