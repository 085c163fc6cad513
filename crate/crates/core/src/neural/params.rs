use alloc::string::String;
use alloc::vec::Vec;

use super::graph::{Gradients, Graph, Var};
use super::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Buffers such as batch-norm running statistics are stored alongside
    /// the weights but never touched by the optimizer.
    pub trainable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// An ordered, named collection of tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

/// Graph handles of a [`ParamSet`] bound into one [`Graph`].
#[derive(Debug, Clone)]
pub struct Bindings(Vec<Var>);

impl Bindings {
    pub fn get(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
            trainable,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.insert(name, value, true)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.insert(name, value, false)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    /// Total number of scalar entries.
    pub fn size(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Adds every tensor to `graph`: trainable ones as variables, buffers as
    /// constants. With `frozen` everything becomes a constant.
    pub fn bind(&self, graph: &mut Graph, frozen: bool) -> Bindings {
        Bindings(
            self.params
                .iter()
                .map(|p| {
                    if p.trainable && !frozen {
                        graph.variable(p.value.clone())
                    } else {
                        graph.constant(p.value.clone())
                    }
                })
                .collect(),
        )
    }

    /// Copies gradients out of `grads`; parameters that did not reach the
    /// loss get a zero gradient.
    pub fn store_grads(&mut self, bindings: &Bindings, grads: &Gradients) {
        for (p, var) in self.params.iter_mut().zip(&bindings.0) {
            p.grad = match grads.get(*var) {
                Some(g) if p.trainable => g.clone(),
                _ => Tensor::zeros(p.value.shape()),
            };
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = Tensor::zeros(p.value.shape());
        }
    }

    /// All values concatenated in insertion order.
    pub fn flatten(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }
}
