use serde::{Deserialize, Serialize};

use super::{AutodiffError, Gradients, Graph, Tensor, Var};

/// Named model parameters in insertion order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParameterSet {
    entries: Vec<(String, Tensor)>,
}

/// Parameters bound into a graph as leaves, in the same order as the set.
#[derive(Debug, Clone)]
pub struct BoundParams<'g> {
    vars: Vec<Var<'g>>,
}

impl<'g> BoundParams<'g> {
    pub fn get(&self, index: usize) -> Var<'g> {
        self.vars[index]
    }

    /// Per-parameter gradients in set order.
    pub fn collect(&self, grads: &Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .map(|v| {
                grads
                    .get(*v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(&v.shape()))
            })
            .collect()
    }
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter and returns its index.
    pub fn insert(
        &mut self,
        name: impl Into<String>,
        value: Tensor,
    ) -> Result<usize, AutodiffError> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(AutodiffError::DuplicateParameter(name));
        }
        self.entries.push((name, value));
        Ok(self.entries.len() - 1)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.entries[i].1)
    }

    pub fn tensor(&self, index: usize) -> &Tensor {
        &self.entries[index].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Number of named tensors.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalars across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Replaces the values of parameter `index`, keeping its shape.
    pub fn set_data(&mut self, index: usize, data: Vec<f64>) -> Result<(), AutodiffError> {
        let (name, tensor) = &mut self.entries[index];
        let shape = tensor.shape().to_vec();
        if data.len() != tensor.len() {
            return Err(AutodiffError::ParameterShape {
                name: name.clone(),
                expected: shape,
                len: data.len(),
            });
        }
        *tensor = Tensor::new(shape, data)?;
        Ok(())
    }

    /// Records every parameter as a leaf; `trainable` selects differentiable
    /// leaves over constants.
    pub fn bind<'g>(&self, graph: &'g Graph, trainable: bool) -> BoundParams<'g> {
        let vars = self
            .entries
            .iter()
            .map(|(_, t)| {
                if trainable {
                    graph.leaf(t.clone())
                } else {
                    graph.constant(t.clone())
                }
            })
            .collect();
        BoundParams { vars }
    }
}
