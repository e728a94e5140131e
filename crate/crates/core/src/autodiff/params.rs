use std::collections::BTreeMap;

use rand::Rng;

use super::Tensor;
use crate::rng::stream;
use crate::{Error, Result};

/// Named parameter tensors, ordered by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    params: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        self.params.insert(name, round_to_f32(t));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Bit patterns of every value, for exact comparisons.
    pub fn fingerprint(&self) -> Vec<(String, Vec<u64>)> {
        self.params
            .iter()
            .map(|(k, v)| (k.clone(), v.data().iter().map(|x| x.to_bits()).collect()))
            .collect()
    }
}

fn round_to_f32(mut t: Tensor) -> Tensor {
    for v in t.data_mut() {
        *v = *v as f32 as f64;
    }
    t
}

pub(crate) fn round_in_place(t: &mut Tensor) {
    for v in t.data_mut() {
        *v = *v as f32 as f64;
    }
}

/// Uniform(-s, s) with `s = sqrt(1 / fan_in)`, drawn from a stream derived
/// from `(seed, name)`.
pub fn init_uniform(seed: u64, name: &str, shape: &[usize], fan_in: usize) -> Tensor {
    let s = (1.0 / fan_in.max(1) as f64).sqrt();
    let mut rng = stream(seed, &format!("init/{name}"));
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-s..s)).collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}
