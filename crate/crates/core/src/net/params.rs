use msprl_tensor::{Element, Graph, Tensor, Var};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<E: Element> {
    pub name: String,
    pub tensor: Tensor<E>,
}

/// Ordered parameter registry. Order and names are part of the checkpoint
/// format.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<E: Element> {
    params: Vec<Parameter<E>>,
}

impl<E: Element> ParamStore<E> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    /// Appends a parameter and returns its index.
    pub fn push(&mut self, name: String, tensor: Tensor<E>) -> usize {
        debug_assert!(self.index_of(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Parameter { name, tensor });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<E>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<E>> {
        self.params.iter_mut()
    }

    pub fn get(&self, i: usize) -> &Parameter<E> {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Parameter<E> {
        &mut self.params[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<E>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor<E>> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.tensor)
    }

    /// `(name, shape)` pairs in registry order.
    pub fn signature(&self) -> Vec<(String, Vec<usize>)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.tensor.shape().to_vec()))
            .collect()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Records every parameter on `g` as a leaf.
    pub fn bind(&self, g: &mut Graph<E>, trainable: bool) -> Result<Bound> {
        let vars = self
            .params
            .iter()
            .map(|p| g.leaf(p.tensor.detached().with_requires_grad(trainable)))
            .collect::<msprl_tensor::Result<Vec<_>>>()?;
        Ok(Bound { vars })
    }
}

/// Graph handles of a [`ParamStore`], in registry order.
#[derive(Clone, Debug)]
pub struct Bound {
    pub vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, i: usize) -> Var {
        self.vars[i]
    }
}
