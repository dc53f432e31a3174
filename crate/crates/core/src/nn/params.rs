use rand::Rng;

use super::{Graph, Tensor, Var};
use crate::seed;

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        let name = name.into();
        assert!(self.index(&name).is_none(), "duplicate parameter `{name}`");
        self.entries.push((name, t));
        self.entries.len() - 1
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index(name).map(|i| &self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    pub fn value_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Put every parameter on the graph, as trainable leaves or frozen constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.entries
            .iter()
            .map(|(_, t)| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect()
    }

    /// Gradients for bound parameters, zero-filled where none flowed.
    pub fn grads(&self, g: &Graph, bound: &[Var]) -> Vec<Tensor> {
        bound
            .iter()
            .zip(&self.entries)
            .map(|(v, (_, t))| g.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(&t.shape)))
            .collect()
    }

    /// Round every value to the nearest f32, as stored on disk.
    pub fn round_to_f32(&mut self) {
        for (_, t) in &mut self.entries {
            t.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    /// SHA-256 over names, shapes and the exact bit patterns of all values.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::new();
        for (n, t) in &self.entries {
            bytes.extend_from_slice(n.as_bytes());
            for d in &t.shape {
                bytes.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in &t.data {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        seed::sha256_hex(&bytes)
    }
}

/// Uniform(−a, a) with `a = sqrt(6 / (fan_in + fan_out))`, seeded by
/// `(seed, layer name)` so layers can be added without disturbing others.
pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, global_seed: u64, name: &str) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = seed::rng(global_seed, &format!("init/{name}"));
    let n: usize = shape.iter().product();
    Tensor {
        shape: shape.to_vec(),
        data: (0..n).map(|_| rng.gen_range(-a..a)).collect(),
    }
}
