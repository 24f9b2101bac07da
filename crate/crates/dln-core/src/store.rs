//! Named parameter collection with trainable/frozen flags.
//!
//! Iteration follows insertion order so optimizer sweeps, checkpoints and
//! gradient reports are deterministic.

use std::collections::HashMap;

use crate::error::{DlnError, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct Param<T: Scalar> {
    pub tensor: Tensor<T>,
    pub trainable: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore<T: Scalar> {
    entries: Vec<(String, Param<T>)>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, tensor: Tensor<T>, trainable: bool) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(DlnError::State(format!("parameter `{name}` already registered")));
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push((name.to_string(), Param { tensor, trainable }));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Result<&Param<T>> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].1)
            .ok_or_else(|| DlnError::State(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param<T>> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.entries[i].1),
            None => Err(DlnError::State(format!("unknown parameter `{name}`"))),
        }
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.get(name)?.tensor)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        Ok(&mut self.get_mut(name)?.tensor)
    }

    pub fn values(&self, name: &str) -> Result<&[T]> {
        Ok(self.get(name)?.tensor.values())
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        self.get_mut(name)?.trainable = trainable;
        Ok(())
    }

    pub fn is_trainable(&self, name: &str) -> Result<bool> {
        Ok(self.get(name)?.trainable)
    }

    /// `(name, param)` pairs in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.entries.iter().map(|(n, p)| (n.as_str(), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.entries.iter_mut().map(|(n, p)| (n.as_str(), p))
    }

    /// Accumulates `scale * delta` into the gradient buffer of `name`.
    pub fn accumulate_grad(&mut self, name: &str, delta: &[T], scale: T) -> Result<()> {
        let tensor = self.tensor_mut(name)?;
        if tensor.numel() != delta.len() {
            return Err(DlnError::Shape {
                op: "accumulate_grad",
                lhs: tensor.shape().to_vec(),
                rhs: vec![delta.len()],
            });
        }
        let grad = tensor.grad_mut();
        for (g, d) in grad.iter_mut().zip(delta.iter()) {
            *g = *g + scale * *d;
        }
        Ok(())
    }

    pub fn ensure_grads(&mut self) {
        for (_, p) in self.entries.iter_mut() {
            p.tensor.grad_mut();
        }
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.entries.iter_mut() {
            p.tensor.zero_grad();
        }
    }

    /// Flat snapshot of all values, used by reproducibility checks.
    pub fn flat_values(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (_, p) in &self.entries {
            out.extend_from_slice(p.tensor.values());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_is_preserved() {
        let mut store: ParamStore<f64> = ParamStore::new();
        for name in ["b", "a", "c"] {
            store.register(name, Tensor::zeros(vec![1]), true).unwrap();
        }
        let names: Vec<&str> = store.names().collect();
        assert_eq!(names, vec!["b", "a", "c"]);
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut store: ParamStore<f64> = ParamStore::new();
        store.register("w", Tensor::zeros(vec![1]), true).unwrap();
        assert!(store.register("w", Tensor::zeros(vec![1]), true).is_err());
    }

    #[test]
    fn grad_accumulation_scales() {
        let mut store: ParamStore<f64> = ParamStore::new();
        store.register("w", Tensor::zeros(vec![2]), true).unwrap();
        store.accumulate_grad("w", &[1.0, 2.0], 0.5).unwrap();
        store.accumulate_grad("w", &[1.0, 2.0], 0.5).unwrap();
        assert_eq!(store.tensor("w").unwrap().grad().unwrap(), &[1.0, 2.0]);
    }
}
