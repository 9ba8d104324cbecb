//! Static layer DAG with explicit per-layer backward passes.

use crate::amp::PrecisionPolicy;
use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

use super::layer::{Layer, LayerCache};
use super::{Gradients, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Input,
    Node(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node<T> {
    pub name: String,
    pub layer: Layer<T>,
    pub inputs: Vec<Source>,
}

/// Nodes in topological order; the last node's output is the graph output.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Everything backward needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    input_shape: Vec<usize>,
    output_shapes: Vec<Vec<usize>>,
    caches: Vec<LayerCache<T>>,
}

/// Per-BatchNorm batch statistics from a train-mode forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub node: usize,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Which side of every ReLU kink each element fell on and which element
/// every max-pool window selected. The network is smooth in a neighbourhood
/// where this stays fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationPattern {
    relu_positive: Vec<bool>,
    pool_argmax: Vec<u32>,
}

impl<T: Real> ForwardCache<T> {
    pub fn activation_pattern(&self) -> ActivationPattern {
        let mut relu_positive = Vec::new();
        let mut pool_argmax = Vec::new();
        for c in &self.caches {
            match c {
                LayerCache::Relu(x) => relu_positive.extend(x.data().iter().map(|&v| v > T::zero())),
                LayerCache::MaxPool(pc) => pool_argmax.extend_from_slice(&pc.argmax),
                _ => {}
            }
        }
        ActivationPattern {
            relu_positive,
            pool_argmax,
        }
    }

    pub fn batch_stats(&self) -> Vec<BatchStats<T>> {
        self.caches
            .iter()
            .enumerate()
            .filter_map(|(node, c)| match c {
                LayerCache::BatchNorm(bc) if bc.mode == Mode::Train => Some(BatchStats {
                    node,
                    mean: bc.mean.clone(),
                    var: bc.var.clone(),
                }),
                _ => None,
            })
            .collect()
    }
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    /// Appends a node and returns its index.
    pub fn push(&mut self, name: impl Into<String>, layer: Layer<T>, inputs: &[Source]) -> Result<usize> {
        let name = name.into();
        if inputs.len() != layer.arity() {
            return Err(Error::contract(format!(
                "node {name}: {:?} takes {} input(s), {} given",
                layer.kind(),
                layer.arity(),
                inputs.len()
            )));
        }
        if let Some(Source::Node(i)) = inputs
            .iter()
            .find(|s| matches!(s, Source::Node(i) if *i >= self.nodes.len()))
        {
            return Err(Error::contract(format!(
                "node {name} references node {i} that does not precede it"
            )));
        }
        if self.nodes.iter().any(|n| n.name == name) {
            return Err(Error::contract(format!("duplicate node name {name}")));
        }
        self.nodes.push(Node {
            name,
            layer,
            inputs: inputs.to_vec(),
        });
        Ok(self.nodes.len() - 1)
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [Node<T>] {
        &mut self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn fetch<'a>(&self, src: Source, input: &'a Tensor<T>, outs: &'a [Tensor<T>]) -> &'a Tensor<T> {
        match src {
            Source::Input => input,
            Source::Node(i) => &outs[i],
        }
    }

    pub fn forward(
        &self,
        input: &Tensor<T>,
        mode: Mode,
        policy: &PrecisionPolicy,
    ) -> Result<(Tensor<T>, ForwardCache<T>)> {
        if self.nodes.is_empty() {
            return Err(Error::contract("forward on an empty graph"));
        }
        let mut outs: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        let mut caches = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let ins: Vec<&Tensor<T>> = node
                .inputs
                .iter()
                .map(|&s| self.fetch(s, input, &outs))
                .collect();
            let (y, cache) = node
                .layer
                .forward(&ins, mode, policy)
                .map_err(|e| annotate(e, &node.name))?;
            outs.push(y);
            caches.push(cache);
        }
        let output_shapes = outs.iter().map(|t| t.shape().to_vec()).collect();
        let output = outs.pop().expect("non-empty graph");
        Ok((
            output,
            ForwardCache {
                input_shape: input.shape().to_vec(),
                output_shapes,
                caches,
            },
        ))
    }

    /// Forward pass in eval mode, discarding the cache.
    pub fn predict(&self, input: &Tensor<T>, policy: &PrecisionPolicy) -> Result<Tensor<T>> {
        Ok(self.forward(input, Mode::Eval, policy)?.0)
    }

    /// Back-propagates `output_grad` and returns `(input_grad, parameter gradients)`.
    /// The gradient map always holds every trainable parameter.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        output_grad: &Tensor<T>,
        policy: &PrecisionPolicy,
    ) -> Result<(Tensor<T>, Gradients<T>)> {
        if cache.caches.len() != self.nodes.len() {
            return Err(Error::contract(
                "backward cache was produced by a different graph",
            ));
        }
        let last = self.nodes.len() - 1;
        if output_grad.shape() != cache.output_shapes[last].as_slice() {
            return Err(Error::contract(format!(
                "output gradient shape {:?} does not match forward output {:?}",
                output_grad.shape(),
                cache.output_shapes[last]
            )));
        }
        let mut node_grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        node_grads[last] = Some(output_grad.clone());
        let mut input_grad: Option<Tensor<T>> = None;
        let mut grads = Gradients::new();

        for (i, node) in self.nodes.iter().enumerate().rev() {
            let Some(dy) = node_grads[i].take() else {
                continue;
            };
            let (dins, dparams) = node
                .layer
                .backward(&cache.caches[i], &dy, policy)
                .map_err(|e| annotate(e, &node.name))?;
            for (slot, g) in dparams {
                grads.insert(format!("{}.{slot}", node.name), g);
            }
            for (src, g) in node.inputs.iter().zip(dins) {
                let target = match *src {
                    Source::Input => &mut input_grad,
                    Source::Node(j) => &mut node_grads[j],
                };
                accumulate(target, g)?;
            }
        }
        for (name, p) in self.parameters() {
            if grads.get(&name).is_none() {
                grads.insert(name, Tensor::zeros(p.shape())?);
            }
        }
        let input_grad = match input_grad {
            Some(g) => g,
            None => Tensor::zeros(&cache.input_shape)?,
        };
        Ok((input_grad, grads))
    }

    /// Applies an exponential-moving-average update of BatchNorm running statistics.
    pub fn commit_batch_stats(&mut self, stats: &[BatchStats<T>]) -> Result<()> {
        for s in stats {
            match self.nodes.get_mut(s.node).map(|n| &mut n.layer) {
                Some(Layer::BatchNorm(bn)) => bn.update_running(&s.mean, &s.var)?,
                _ => {
                    return Err(Error::contract(format!(
                        "batch statistics for node {} which is not a BatchNorm",
                        s.node
                    )))
                }
            }
        }
        Ok(())
    }

    /// Trainable parameters as `("node.slot", tensor)` in node order.
    pub fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.layer
                    .params()
                    .into_iter()
                    .map(move |(slot, t)| (format!("{}.{slot}", n.name), t))
            })
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.nodes
            .iter_mut()
            .flat_map(|n| {
                let name = n.name.clone();
                n.layer
                    .params_mut()
                    .into_iter()
                    .map(move |(slot, t)| (format!("{name}.{slot}"), t))
            })
            .collect()
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.parameters_mut()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.layer
                    .buffers()
                    .into_iter()
                    .map(move |(slot, t)| (format!("{}.{slot}", n.name), t))
            })
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.nodes
            .iter_mut()
            .flat_map(|n| {
                let name = n.name.clone();
                n.layer
                    .buffers_mut()
                    .into_iter()
                    .map(move |(slot, t)| (format!("{name}.{slot}"), t))
            })
            .collect()
    }

    pub fn trainable_param_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn total_param_count(&self) -> usize {
        self.trainable_param_count() + self.buffers().iter().map(|(_, t)| t.len()).sum::<usize>()
    }

    /// Output shape of every node for a given input shape.
    pub fn shapes(&self, input_shape: &[usize]) -> Result<Vec<Vec<usize>>> {
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let ins: Vec<&[usize]> = node
                .inputs
                .iter()
                .map(|s| match *s {
                    Source::Input => input_shape,
                    Source::Node(i) => shapes[i].as_slice(),
                })
                .collect();
            let s = node
                .layer
                .output_shape(&ins)
                .map_err(|e| annotate(e, &node.name))?;
            shapes.push(s);
        }
        Ok(shapes)
    }

    pub fn cast<U: Real>(&self) -> Graph<U> {
        Graph {
            nodes: self
                .nodes
                .iter()
                .map(|n| Node {
                    name: n.name.clone(),
                    layer: n.layer.cast(),
                    inputs: n.inputs.clone(),
                })
                .collect(),
        }
    }
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<()> {
    match slot {
        None => *slot = Some(g),
        Some(acc) => {
            if !acc.same_shape(&g) {
                return Err(Error::contract("gradient fan-in with mismatched shapes"));
            }
            for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
    }
    Ok(())
}

fn annotate(e: Error, node: &str) -> Error {
    match e {
        Error::Contract(msg) => Error::Contract(format!("{node}: {msg}")),
        other => other,
    }
}
