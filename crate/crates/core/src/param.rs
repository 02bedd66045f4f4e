//! Named trainable parameters and their gradient slots.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{HiftError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Excluded from optimizer updates when false.
    pub trainable: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
            trainable: true,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter name {name}");
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter::new(name, value));
        id
    }

    /// Kaiming-style normal initialization scaled by fan-in.
    pub fn add_kaiming<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let std = (2.0 / fan_in as f64).sqrt();
        self.add(name, Tensor::randn(shape, std, rng))
    }

    /// Xavier-style normal initialization for linear projections.
    pub fn add_xavier<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> ParamId {
        let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
        self.add(name, Tensor::randn(&[fan_in, fan_out], std, rng))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_ones(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::ones(shape))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
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

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Result<&Parameter> {
        self.id(name)
            .map(|id| self.get(id))
            .ok_or_else(|| HiftError::Contract(format!("unknown parameter {name}")))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Sets the trainable flag on every parameter whose name starts with `prefix`.
    pub fn set_trainable(&mut self, prefix: &str, trainable: bool) -> usize {
        let mut n = 0;
        for p in self.params.iter_mut().filter(|p| p.name.starts_with(prefix)) {
            p.trainable = trainable;
            n += 1;
        }
        n
    }

    /// Copies every value from `other`, which must hold exactly the same
    /// parameter names and shapes.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        if let Some(extra) = other
            .params
            .iter()
            .find(|o| self.params.iter().all(|p| p.name != o.name))
        {
            return Err(HiftError::Contract(format!(
                "stored parameter {} does not belong to this model",
                extra.name
            )));
        }
        for p in &mut self.params {
            let src = other.by_name(&p.name)?;
            if src.value.shape() != p.value.shape() {
                return Err(HiftError::Shape(format!(
                    "parameter {}: stored shape {:?} != model shape {:?}",
                    p.name,
                    src.value.shape(),
                    p.value.shape()
                )));
            }
            p.value = src.value.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_clears_every_slot() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::ones(&[2, 2]));
        store.get_mut(a).grad.fill(3.5);
        store.zero_grad();
        assert!(store.get(a).grad.data().iter().all(|&g| g == 0.0));
        assert_eq!(store.get(a).grad.shape(), store.get(a).value.shape());
    }

    #[test]
    fn lookup_by_name() {
        let mut store = ParamStore::new();
        store.add_zeros("x.bias", &[3]);
        assert!(store.by_name("x.bias").is_ok());
        assert!(store.by_name("missing").is_err());
    }
}
