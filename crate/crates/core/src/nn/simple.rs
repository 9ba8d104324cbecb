//! Parameter-free layers: ReLU, 2×2 max pooling and channel concatenation.

use crate::error::{Error, Result};
use crate::exec;
use crate::numerics::{Real, Tensor};

/// `max(x, 0)`, passing NaN through so overflow stays visible downstream.
pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v <= T::zero() { T::zero() } else { v })
}

pub fn relu_backward<T: Real>(input: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if !input.same_shape(dy) {
        return Err(Error::contract("ReLU backward: shape mismatch with cached input"));
    }
    let data = input
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(dy.shape(), data)
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    pub input_shape: [usize; 4],
    /// Flat input index of the selected element for every output element.
    pub argmax: Vec<u32>,
}

/// 2×2 stride-2 max pooling. Ties go to the first element in row-major order.
pub fn maxpool2_forward<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolCache)> {
    let [n, c, h, w] = x.dims4("MaxPool2 input")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::contract(format!(
            "MaxPool2 needs even H and W, got {h}×{w}"
        )));
    }
    let (ho, wo) = (h / 2, w / 2);
    let xd = x.data();
    if xd.len() > u32::MAX as usize {
        return Err(Error::contract("MaxPool2 input too large for u32 indices"));
    }
    let planes = exec::map_indices(n * c, |p| {
        let base = p * h * w;
        let mut vals = Vec::with_capacity(ho * wo);
        let mut idx = Vec::with_capacity(ho * wo);
        for i in 0..ho {
            for j in 0..wo {
                let mut best = base + 2 * i * w + 2 * j;
                for cand in [
                    base + 2 * i * w + 2 * j + 1,
                    base + (2 * i + 1) * w + 2 * j,
                    base + (2 * i + 1) * w + 2 * j + 1,
                ] {
                    if xd[cand] > xd[best] {
                        best = cand;
                    }
                }
                vals.push(xd[best]);
                idx.push(best as u32);
            }
        }
        (vals, idx)
    });
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    for (v, i) in planes {
        out.extend(v);
        argmax.extend(i);
    }
    Ok((
        Tensor::from_vec(&[n, c, ho, wo], out)?,
        PoolCache {
            input_shape: [n, c, h, w],
            argmax,
        },
    ))
}

pub fn maxpool2_backward<T: Real>(cache: &PoolCache, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if dy.len() != cache.argmax.len() {
        return Err(Error::contract("MaxPool2 backward: upstream does not match cache"));
    }
    let mut dx = Tensor::zeros(&cache.input_shape)?;
    let d = dx.data_mut();
    for (&i, &g) in cache.argmax.iter().zip(dy.data()) {
        d[i as usize] += g;
    }
    Ok(dx)
}

/// Concatenate `[a, b]` along the channel axis.
pub fn concat_forward<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, ca, h, w] = a.dims4("Concat first input")?;
    let [nb, cb, hb, wb] = b.dims4("Concat second input")?;
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::contract(format!(
            "Concat inputs disagree outside the channel axis: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(a.len() + b.len());
    for s in 0..n {
        out.extend_from_slice(&a.data()[s * ca * plane..(s + 1) * ca * plane]);
        out.extend_from_slice(&b.data()[s * cb * plane..(s + 1) * cb * plane]);
    }
    Tensor::from_vec(&[n, ca + cb, h, w], out)
}

/// Split an upstream gradient back into the two concatenated parts.
pub fn concat_backward<T: Real>(
    split: usize,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let [n, c, h, w] = dy.dims4("Concat upstream")?;
    if split == 0 || split >= c {
        return Err(Error::contract("Concat backward: invalid channel split"));
    }
    let plane = h * w;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for s in 0..n {
        let base = s * c * plane;
        a.extend_from_slice(&dy.data()[base..base + split * plane]);
        b.extend_from_slice(&dy.data()[base + split * plane..base + c * plane]);
    }
    Ok((
        Tensor::from_vec(&[n, split, h, w], a)?,
        Tensor::from_vec(&[n, c - split, h, w], b)?,
    ))
}
