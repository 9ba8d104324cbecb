use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::window::SampleWindow;

/// Stacked samples: input `N×13×H×W`, target `N×12×H×W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub input: Tensor<f32>,
    pub target: Tensor<f32>,
    /// Positions of the samples in the source window list.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn stack(windows: &[SampleWindow], indices: &[usize]) -> Result<Batch> {
    let first = windows
        .get(*indices.first().ok_or_else(|| Error::contract("cannot stack zero samples"))?)
        .ok_or_else(|| Error::contract("sample index out of range"))?;
    let (ishape, tshape) = (first.input.shape().to_vec(), first.target.shape().to_vec());
    let mut input = Vec::with_capacity(indices.len() * first.input.len());
    let mut target = Vec::with_capacity(indices.len() * first.target.len());
    for &i in indices {
        let w = windows
            .get(i)
            .ok_or_else(|| Error::contract("sample index out of range"))?;
        if w.input.shape() != ishape.as_slice() || w.target.shape() != tshape.as_slice() {
            return Err(Error::contract("windows in a batch must share one shape"));
        }
        input.extend_from_slice(w.input.data());
        target.extend_from_slice(w.target.data());
    }
    let n = indices.len();
    Ok(Batch {
        input: Tensor::from_vec(&[&[n][..], &ishape].concat(), input)?,
        target: Tensor::from_vec(&[&[n][..], &tshape].concat(), target)?,
        indices: indices.to_vec(),
    })
}

/// Seeded epoch iterator over `windows`; the last batch may be short.
#[derive(Debug)]
pub struct BatchIter<'a> {
    windows: &'a [SampleWindow],
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

pub fn batch_iter(windows: &[SampleWindow], batch_size: usize, shuffle_seed: u64) -> Result<BatchIter<'_>> {
    if batch_size == 0 {
        return Err(Error::contract("batch size must be at least 1"));
    }
    if windows.is_empty() {
        return Err(Error::contract("cannot batch an empty window list"));
    }
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    Ok(BatchIter {
        windows,
        order,
        batch_size,
        pos: 0,
    })
}

impl BatchIter<'_> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let b = stack(self.windows, &self.order[self.pos..end]).expect("validated windows");
        self.pos = end;
        Some(b)
    }
}
