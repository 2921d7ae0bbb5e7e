use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use super::{Tensor, TensorError};
use crate::math;

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors. Insertion order is stable and is the checkpoint order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId, TensorError> {
        if self.index.contains_key(name) {
            return Err(TensorError::Contract(format!("duplicate parameter name `{}`", name)));
        }
        let id = ParamId(self.values.len());
        self.names.push(name.to_string());
        self.values.push(value);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> + '_ {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// L2 norm over every parameter whose name starts with `prefix`.
    pub fn norm_of_prefix(&self, prefix: &str) -> f64 {
        let s: f64 = self
            .iter()
            .filter(|(_, n, _)| n.starts_with(prefix))
            .map(|(_, _, t)| t.data().iter().map(|v| v * v).sum::<f64>())
            .sum();
        math::sqrt(s)
    }

    /// Copies every parameter whose name starts with `prefix` from `other`
    /// (matched by name and shape). Returns how many were copied.
    pub fn copy_prefix_from(&mut self, other: &ParamStore, prefix: &str) -> Result<usize, TensorError> {
        let mut copied = 0;
        for i in 0..self.values.len() {
            if !self.names[i].starts_with(prefix) {
                continue;
            }
            let src = other.id(&self.names[i]).ok_or_else(|| {
                TensorError::Contract(format!("parameter `{}` missing from source", self.names[i]))
            })?;
            let src = other.get(src);
            if src.shape() != self.values[i].shape() {
                return Err(TensorError::shape(
                    "copy_prefix_from",
                    format!("`{}`: {:?} vs {:?}", self.names[i], src.shape(), self.values[i].shape()),
                ));
            }
            self.values[i] = src.clone();
            copied += 1;
        }
        Ok(copied)
    }
}

/// Gradient buffers keyed by [`ParamId`]. Untouched parameters have no buffer
/// and read as zero.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accumulate(&mut self, id: ParamId, grad: &Tensor, scale: f64) {
        if self.slots.len() <= id.0 {
            self.slots.resize(id.0 + 1, None);
        }
        match &mut self.slots[id.0] {
            Some(g) => g.add_scaled(grad, scale),
            slot @ None => {
                let mut g = grad.clone();
                if scale != 1.0 {
                    g.data_mut().iter_mut().for_each(|v| *v *= scale);
                }
                *slot = Some(g);
            }
        }
    }

    /// Adds `other` into `self`.
    pub fn merge(&mut self, other: &Gradients) {
        for (i, g) in other.slots.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g, 1.0);
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.slots.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient for `id`, materialized as zeros when the parameter was not reached.
    pub fn dense(&self, id: ParamId, store: &ParamStore) -> Tensor {
        self.get(id).cloned().unwrap_or_else(|| Tensor::zeros(store.get(id).shape()))
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.slots.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slots.iter().flatten().all(Tensor::is_finite)
    }

    pub fn clear(&mut self) {
        self.slots.clear();
    }
}

/// Glorot-uniform matrix of shape `(fan_in, fan_out)`.
pub fn xavier_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = math::sqrt(6.0 / (fan_in + fan_out).max(1) as f64);
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::raw(fan_in, fan_out, data)
}
