use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;

/// Computes per-input gradients from `(grad_out, inputs, output, needs_grad)`.
/// Entries for inputs with `needs_grad == false` may be `None`.
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &[&Tensor], &Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    inputs: Vec<usize>,
    backward: Option<BackwardFn>,
    needs_grad: bool,
    param: Option<ParamId>,
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Reverse-mode tape. Values are recorded in evaluation order; `backward`
/// walks them in reverse.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    buffer_updates: Vec<(ParamId, Tensor)>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_leaf(&mut self, value: Tensor, needs_grad: bool, param: Option<ParamId>) -> Var {
        self.nodes.push(Node {
            value,
            inputs: Vec::new(),
            backward: None,
            needs_grad,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false, None)
    }

    /// A differentiable leaf that is not a stored parameter (used for input
    /// gradients in checks).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true, None)
    }

    /// Leaf bound to a stored parameter; repeated calls share one node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let trainable = store.is_trainable(id);
        let v = self.push_leaf(store.value(id).clone(), trainable, Some(id));
        self.param_vars.insert(id, v);
        v
    }

    pub(crate) fn record(&mut self, value: Tensor, inputs: &[Var], backward: BackwardFn) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            inputs: inputs.iter().map(|v| v.0).collect(),
            backward: needs_grad.then_some(backward),
            needs_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Non-trainable state (batch-norm running moments) computed during a
    /// training forward pass, to be written back by the caller.
    pub(crate) fn push_buffer_update(&mut self, id: ParamId, value: Tensor) {
        self.buffer_updates.push((id, value));
    }

    pub fn take_buffer_updates(&mut self) -> Vec<(ParamId, Tensor)> {
        std::mem::take(&mut self.buffer_updates)
    }

    /// Back-propagates from a scalar `loss` (seed gradient 1).
    pub fn backward(&self, loss: Var) -> Gradients {
        let seed = Tensor::full(self.value(loss).shape(), 1.0);
        self.backward_with(loss, seed)
    }

    pub fn backward_with(&self, output: Var, seed: Tensor) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(grad_out) = grads[i].take() else {
                continue;
            };
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|&j| &self.nodes[j].value).collect();
            let needs: Vec<bool> = node.inputs.iter().map(|&j| self.nodes[j].needs_grad).collect();
            let input_grads = backward(&grad_out, &inputs, &node.value, &needs);
            for ((&j, g), need) in node.inputs.iter().zip(input_grads).zip(needs) {
                if let (Some(g), true) = (g, need) {
                    match &mut grads[j] {
                        Some(acc) => acc.add_assign(&g),
                        slot => *slot = Some(g),
                    }
                }
            }
            grads[i] = Some(grad_out);
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (p, i)))
            .collect();
        Gradients { grads, params }
    }
}

/// Result of a backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradients of every trainable parameter that took part in the graph.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params
            .iter()
            .filter_map(|&(p, i)| self.grads[i].as_ref().map(|g| (p, g)))
    }
}
