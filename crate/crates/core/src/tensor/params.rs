use super::{Real, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};
use rand::Rng as _;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Named parameters plus a version that increases on every update.
/// Clones share tensor storage, so a published snapshot is cheap to hand
/// to any number of readers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore<T> {
    params: BTreeMap<String, Arc<Tensor<T>>>,
    version: u64,
}

impl<T: Real> Default for ParameterStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore { params: BTreeMap::new(), version: 0 }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn set_version(&mut self, v: u64) {
        self.version = v;
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::Usage(format!("parameter {name} already exists")));
        }
        self.params.insert(name.to_string(), Arc::new(value));
        Ok(())
    }

    /// Replaces an existing parameter; the shape must not change.
    pub fn replace(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let slot = self.params.get_mut(name).ok_or_else(|| Error::Usage(format!("unknown parameter {name}")))?;
        if slot.shape() != value.shape() {
            return Err(Error::Shape(format!("{name}: {:?} cannot become {:?}", slot.shape(), value.shape())));
        }
        *slot = Arc::new(value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Arc<Tensor<T>>> {
        self.params.get(name).ok_or_else(|| Error::Shape(format!("missing parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Arc<Tensor<T>>)> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParameterStore<U> {
        ParameterStore {
            params: self.params.iter().map(|(k, v)| (k.clone(), Arc::new(v.cast()))).collect(),
            version: self.version,
        }
    }

    /// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init_uniform(&mut self, name: &str, fan_in: usize, rows: usize, cols: usize, rng: &mut Rng) -> Result<()> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| T::from_f64(rng.random_range(-bound..bound))).collect();
        self.insert(name, Tensor::from_vec(rows, cols, data)?)
    }

    pub fn init_const(&mut self, name: &str, rows: usize, cols: usize, v: f64) -> Result<()> {
        self.insert(name, Tensor::filled(rows, cols, T::from_f64(v)))
    }
}
