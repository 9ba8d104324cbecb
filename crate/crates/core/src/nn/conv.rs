//! Same-padded stride-1 convolution and the 2×2 stride-2 transposed convolution.
//!
//! Under a binary16 policy the kernels read binary16-rounded inputs and
//! weights, multiply exactly, accumulate in the working type in a fixed
//! order, add the bias and round the result back to binary16. Per output
//! element the accumulation order is `(c_in, kh, kw)` for [`Conv2d`] and
//! `c_in` for [`ConvTranspose2d`], the same left-to-right order
//! [`crate::numerics::mixed_mac`] uses for the gathered patch.

use crate::error::{Error, Result};
use crate::exec;
use crate::numerics::{Real, Tensor};

/// Inputs and weights as the kernel saw them (binary16-rounded under AMP).
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
}

fn maybe_round<T: Real>(t: &Tensor<T>, f16: bool) -> Tensor<T> {
    if f16 {
        t.rounded_f16()
    } else {
        t.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
    /// `[c_out, c_in, k, k]`
    pub weight: Tensor<T>,
    /// `[c_out]`
    pub bias: Tensor<T>,
}

impl<T: Real> Conv2d<T> {
    /// Zero-initialised layer. `kernel` must be odd.
    pub fn new(kernel: usize, c_in: usize, c_out: usize) -> Result<Self> {
        if kernel.is_multiple_of(2) || c_in == 0 || c_out == 0 {
            return Err(Error::contract(format!(
                "Conv2d needs an odd kernel and non-zero channels (k={kernel}, c_in={c_in}, c_out={c_out})"
            )));
        }
        Ok(Conv2d {
            kernel,
            c_in,
            c_out,
            weight: Tensor::zeros(&[c_out, c_in, kernel, kernel])?,
            bias: Tensor::zeros(&[c_out])?,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Tensor<T>, f16: bool) -> Result<(Tensor<T>, ConvCache<T>)> {
        let [n, ci, h, w] = x.dims4("Conv2d input")?;
        if ci != self.c_in {
            return Err(Error::contract(format!(
                "Conv2d expects {} input channels, got {ci}",
                self.c_in
            )));
        }
        let input = maybe_round(x, f16);
        let weight = maybe_round(&self.weight, f16);
        let (k, co, pad) = (self.kernel, self.c_out, (self.kernel / 2) as isize);
        let plane = h * w;
        let mut out = Tensor::zeros(&[n, co, h, w])?;
        let xd = input.data();
        let wd = weight.data();
        let bd = self.bias.data();
        exec::for_each_chunk_mut(out.data_mut(), plane, |idx, o| {
            let (b, oc) = (idx / co, idx % co);
            for ic in 0..ci {
                let xp = &xd[(b * ci + ic) * plane..][..plane];
                for kh in 0..k {
                    let dh = kh as isize - pad;
                    let (oh0, oh1) = valid_range(h, dh);
                    for kw in 0..k {
                        let dw = kw as isize - pad;
                        let (ow0, ow1) = valid_range(w, dw);
                        if ow0 >= ow1 {
                            continue;
                        }
                        let wv = wd[((oc * ci + ic) * k + kh) * k + kw];
                        for oh in oh0..oh1 {
                            let ih = (oh as isize + dh) as usize;
                            let src = (ih * w) as isize + dw;
                            let orow = &mut o[oh * w + ow0..oh * w + ow1];
                            let irow = &xp[(src + ow0 as isize) as usize..][..ow1 - ow0];
                            for (acc, &xv) in orow.iter_mut().zip(irow) {
                                *acc += wv * xv;
                            }
                        }
                    }
                }
            }
            finish(o, bd[oc], f16);
        });
        Ok((out, ConvCache { input, weight }))
    }

    /// Returns `(input_grad, weight_grad, bias_grad)`.
    pub fn backward(
        &self,
        cache: &ConvCache<T>,
        dy: &Tensor<T>,
        f16: bool,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let [n, ci, h, w] = cache.input.dims4("Conv2d cache")?;
        let (k, co, pad) = (self.kernel, self.c_out, (self.kernel / 2) as isize);
        if dy.shape() != [n, co, h, w] || cache.weight.shape() != self.weight.shape() {
            return Err(Error::contract(format!(
                "Conv2d backward: upstream shape {:?} does not match cached forward {:?}",
                dy.shape(),
                [n, co, h, w]
            )));
        }
        let dy = maybe_round(dy, f16);
        let plane = h * w;
        let xd = cache.input.data();
        let wd = cache.weight.data();
        let gd = dy.data();

        let mut dx = Tensor::<T>::zeros(&[n, ci, h, w])?;
        exec::for_each_chunk_mut(dx.data_mut(), plane, |idx, o| {
            let (b, ic) = (idx / ci, idx % ci);
            for oc in 0..co {
                let gp = &gd[(b * co + oc) * plane..][..plane];
                for kh in 0..k {
                    let dh = kh as isize - pad;
                    let (oh0, oh1) = valid_range(h, dh);
                    for kw in 0..k {
                        let dw = kw as isize - pad;
                        let (ow0, ow1) = valid_range(w, dw);
                        if ow0 >= ow1 {
                            continue;
                        }
                        let wv = wd[((oc * ci + ic) * k + kh) * k + kw];
                        for oh in oh0..oh1 {
                            let ih = (oh as isize + dh) as usize;
                            let dst = (ih * w) as isize + dw;
                            let drow = &mut o[(dst + ow0 as isize) as usize..][..ow1 - ow0];
                            let grow = &gp[oh * w + ow0..oh * w + ow1];
                            for (acc, &g) in drow.iter_mut().zip(grow) {
                                *acc += wv * g;
                            }
                        }
                    }
                }
            }
            if f16 {
                o.iter_mut().for_each(|v| *v = v.round_f16());
            }
        });

        let mut dwt = Tensor::zeros(self.weight.shape())?;
        exec::for_each_chunk_mut(dwt.data_mut(), ci * k * k, |oc, o| {
            for ic in 0..ci {
                for kh in 0..k {
                    let dh = kh as isize - pad;
                    let (oh0, oh1) = valid_range(h, dh);
                    for kw in 0..k {
                        let dw = kw as isize - pad;
                        let (ow0, ow1) = valid_range(w, dw);
                        let mut acc = T::zero();
                        if ow0 < ow1 {
                            for b in 0..n {
                                let gp = &gd[(b * co + oc) * plane..][..plane];
                                let xp = &xd[(b * ci + ic) * plane..][..plane];
                                for oh in oh0..oh1 {
                                    let ih = (oh as isize + dh) as usize;
                                    let src = (ih * w) as isize + dw;
                                    let grow = &gp[oh * w + ow0..oh * w + ow1];
                                    let xrow = &xp[(src + ow0 as isize) as usize..][..ow1 - ow0];
                                    for (&g, &xv) in grow.iter().zip(xrow) {
                                        acc += g * xv;
                                    }
                                }
                            }
                        }
                        o[(ic * k + kh) * k + kw] = if f16 { acc.round_f16() } else { acc };
                    }
                }
            }
        });

        let db = channel_sums(&dy, f16)?;
        Ok((dx, dwt, db))
    }
}

/// Output rows/cols `o` for which `o + shift` lies inside `0..len`.
#[inline]
fn valid_range(len: usize, shift: isize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (len as isize - shift).min(len as isize).max(0) as usize;
    (lo.min(hi), hi)
}

#[inline]
fn finish<T: Real>(plane: &mut [T], bias: T, f16: bool) {
    if f16 {
        plane.iter_mut().for_each(|v| *v = (*v + bias).round_f16());
    } else {
        plane.iter_mut().for_each(|v| *v += bias);
    }
}

/// Per-channel sums of an N,C,H,W tensor in `(n, h, w)` order.
fn channel_sums<T: Real>(t: &Tensor<T>, f16: bool) -> Result<Tensor<T>> {
    let [n, c, h, w] = t.dims4("channel sum")?;
    let plane = h * w;
    let d = t.data();
    let sums = exec::map_indices(c, |ch| {
        let mut acc = T::zero();
        for b in 0..n {
            for &v in &d[(b * c + ch) * plane..][..plane] {
                acc += v;
            }
        }
        if f16 {
            acc.round_f16()
        } else {
            acc
        }
    });
    Tensor::from_vec(&[c], sums)
}

/// Kernel 2, stride 2 transposed convolution: exactly doubles H and W.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d<T> {
    pub c_in: usize,
    pub c_out: usize,
    /// `[c_in, c_out, 2, 2]`
    pub weight: Tensor<T>,
    /// `[c_out]`
    pub bias: Tensor<T>,
}

impl<T: Real> ConvTranspose2d<T> {
    pub fn new(c_in: usize, c_out: usize) -> Result<Self> {
        if c_in == 0 || c_out == 0 {
            return Err(Error::contract("ConvTranspose2d needs non-zero channels"));
        }
        Ok(ConvTranspose2d {
            c_in,
            c_out,
            weight: Tensor::zeros(&[c_in, c_out, 2, 2])?,
            bias: Tensor::zeros(&[c_out])?,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Tensor<T>, f16: bool) -> Result<(Tensor<T>, ConvCache<T>)> {
        let [n, ci, h, w] = x.dims4("ConvTranspose2d input")?;
        if ci != self.c_in {
            return Err(Error::contract(format!(
                "ConvTranspose2d expects {} input channels, got {ci}",
                self.c_in
            )));
        }
        let input = maybe_round(x, f16);
        let weight = maybe_round(&self.weight, f16);
        let co = self.c_out;
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = Tensor::zeros(&[n, co, h2, w2])?;
        let xd = input.data();
        let wd = weight.data();
        let bd = self.bias.data();
        exec::for_each_chunk_mut(out.data_mut(), h2 * w2, |idx, o| {
            let (b, oc) = (idx / co, idx % co);
            for ic in 0..ci {
                let xp = &xd[(b * ci + ic) * h * w..][..h * w];
                for a in 0..2 {
                    for c in 0..2 {
                        let wv = wd[((ic * co + oc) * 2 + a) * 2 + c];
                        for i in 0..h {
                            let orow = &mut o[(2 * i + a) * w2..][..w2];
                            for j in 0..w {
                                orow[2 * j + c] += wv * xp[i * w + j];
                            }
                        }
                    }
                }
            }
            finish(o, bd[oc], f16);
        });
        Ok((out, ConvCache { input, weight }))
    }

    pub fn backward(
        &self,
        cache: &ConvCache<T>,
        dy: &Tensor<T>,
        f16: bool,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let [n, ci, h, w] = cache.input.dims4("ConvTranspose2d cache")?;
        let co = self.c_out;
        let (h2, w2) = (2 * h, 2 * w);
        if dy.shape() != [n, co, h2, w2] {
            return Err(Error::contract(format!(
                "ConvTranspose2d backward: upstream shape {:?}, expected {:?}",
                dy.shape(),
                [n, co, h2, w2]
            )));
        }
        let dy = maybe_round(dy, f16);
        let xd = cache.input.data();
        let wd = cache.weight.data();
        let gd = dy.data();

        let mut dx = Tensor::<T>::zeros(&[n, ci, h, w])?;
        exec::for_each_chunk_mut(dx.data_mut(), h * w, |idx, o| {
            let (b, ic) = (idx / ci, idx % ci);
            for oc in 0..co {
                let gp = &gd[(b * co + oc) * h2 * w2..][..h2 * w2];
                for a in 0..2 {
                    for c in 0..2 {
                        let wv = wd[((ic * co + oc) * 2 + a) * 2 + c];
                        for i in 0..h {
                            let grow = &gp[(2 * i + a) * w2..][..w2];
                            for j in 0..w {
                                o[i * w + j] += wv * grow[2 * j + c];
                            }
                        }
                    }
                }
            }
            if f16 {
                o.iter_mut().for_each(|v| *v = v.round_f16());
            }
        });

        let mut dwt = Tensor::zeros(self.weight.shape())?;
        exec::for_each_chunk_mut(dwt.data_mut(), co * 4, |ic, o| {
            for oc in 0..co {
                for a in 0..2 {
                    for c in 0..2 {
                        let mut acc = T::zero();
                        for b in 0..n {
                            let xp = &xd[(b * ci + ic) * h * w..][..h * w];
                            let gp = &gd[(b * co + oc) * h2 * w2..][..h2 * w2];
                            for i in 0..h {
                                let grow = &gp[(2 * i + a) * w2..][..w2];
                                for j in 0..w {
                                    acc += xp[i * w + j] * grow[2 * j + c];
                                }
                            }
                        }
                        o[(oc * 2 + a) * 2 + c] = if f16 { acc.round_f16() } else { acc };
                    }
                }
            }
        });

        let db = channel_sums(&dy, f16)?;
        Ok((dx, dwt, db))
    }
}
