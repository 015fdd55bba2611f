use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use super::tensor::{Real, Tensor};
use crate::error::{KgcError, Result};

/// Named trainable tensors, iterated in name order.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore<T> {
    tensors: BTreeMap<String, Arc<Tensor<T>>>,
    pub seed: u64,
}

impl<T: Real> ParameterStore<T> {
    pub fn new(seed: u64) -> Self {
        ParameterStore {
            tensors: BTreeMap::new(),
            seed,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(KgcError::Contract(format!("parameter {name:?} registered twice")));
        }
        self.tensors.insert(name, Arc::new(tensor));
        Ok(())
    }

    /// Uniform in `[-bound, bound]`.
    pub fn insert_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        bound: f64,
        rng: &mut impl Rng,
    ) -> Result<()> {
        let t = Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-bound..=bound)));
        self.insert(name, t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name).map(Arc::as_ref)
    }

    pub(crate) fn get_shared(&self, name: &str) -> Option<Arc<Tensor<T>>> {
        self.tensors.get(name).cloned()
    }

    /// Replaces an existing tensor; the shape must not change.
    pub fn set(&mut self, name: &str, tensor: Tensor<T>) -> Result<()> {
        let slot = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| KgcError::Contract(format!("unknown parameter {name:?}")))?;
        if slot.shape() != tensor.shape() {
            return Err(KgcError::shape(
                "set_param",
                format!("{name}: {:?} -> {:?}", slot.shape(), tensor.shape()),
            ));
        }
        *slot = Arc::new(tensor);
        Ok(())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name).map(Arc::make_mut)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParameterStore<U> {
        ParameterStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Arc::new(v.cast())))
                .collect(),
            seed: self.seed,
        }
    }
}
