//! Layers, the static U-Net graph, loss, optimizer and gradient checking.

pub mod adam;
pub mod conv;
pub mod gradcheck;
pub mod graph;
pub mod layer;
pub mod loss;
pub mod norm;
pub mod simple;

use std::collections::BTreeMap;

use crate::numerics::{Real, Tensor};

pub use adam::{Adam, AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{ActivationPattern, BatchStats, ForwardCache, Graph, Node, Source};
pub use layer::{Layer, LayerCache};
pub use loss::mse_loss;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// BatchNorm normalizes with batch statistics.
    Train,
    /// BatchNorm normalizes with running statistics.
    Eval,
}

/// Parameter name → gradient tensor, iterated in name order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradients<T> {
    entries: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn new() -> Self {
        Gradients {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Tensor<T>) {
        self.entries.insert(name.into(), grad);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.entries.iter_mut()
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(|t| t.all_finite())
    }

    /// Largest absolute entry across all gradients.
    pub fn max_abs(&self) -> T {
        self.entries
            .values()
            .flat_map(|t| t.data().iter())
            .fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn cast<U: Real>(&self) -> Gradients<U> {
        Gradients {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }
}

impl<T> IntoIterator for Gradients<T> {
    type Item = (String, Tensor<T>);
    type IntoIter = std::collections::btree_map::IntoIter<String, Tensor<T>>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.into_iter()
    }
}

impl<T: Real> FromIterator<(String, Tensor<T>)> for Gradients<T> {
    fn from_iter<I: IntoIterator<Item = (String, Tensor<T>)>>(iter: I) -> Self {
        Gradients {
            entries: iter.into_iter().collect(),
        }
    }
}
