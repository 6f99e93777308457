//! Named parameter storage shared by networks, optimizers and checkpoints.

use indexmap::IndexMap;
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("duplicate parameter name `{0}`")]
    Duplicate(String),
    #[error("unknown parameter `{0}`")]
    Unknown(String),
    #[error("parameter `{name}`: expected dims {expected}, got {got}")]
    Shape {
        name: String,
        expected: String,
        got: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub value: Tensor,
    /// False for buffers such as batch-norm running statistics.
    pub trainable: bool,
}

/// Insertion-ordered map from hierarchical name (`enc1.conv0.weight`) to
/// tensor. Iteration order is the order of registration and therefore stable
/// across runs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, ParamEntry>,
}

/// Gradients keyed by parameter name.
pub type GradMap = IndexMap<String, Tensor>;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> Result<(), ParamError> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(ParamError::Duplicate(name));
        }
        self.entries.insert(name, ParamEntry { value, trainable });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name).map(|e| &mut e.value)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Total number of scalar values in trainable entries.
    pub fn num_trainable(&self) -> usize {
        self.entries
            .values()
            .filter(|e| e.trainable)
            .map(|e| e.value.numel())
            .sum()
    }

    /// Replace the value of an existing entry, keeping its dims.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<(), ParamError> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| ParamError::Unknown(name.to_string()))?;
        if entry.value.dims() != value.dims() {
            return Err(ParamError::Shape {
                name: name.to_string(),
                expected: entry.value.dims().to_string(),
                got: value.dims().to_string(),
            });
        }
        entry.value = value;
        Ok(())
    }

    /// Names whose values differ bitwise between `self` and `other`.
    pub fn changed_entries(&self, other: &ParamStore) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(name, e)| match other.entries.get(*name) {
                Some(o) => {
                    o.value.dims() != e.value.dims()
                        || o.value
                            .data()
                            .iter()
                            .zip(e.value.data())
                            .any(|(a, b)| a.to_bits() != b.to_bits())
                }
                None => true,
            })
            .map(|(name, _)| name.clone())
            .collect()
    }
}
