//! Named, ordered parameter storage shared by the encoder and the heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered named parameter arrays. Order is insertion order and defines the
/// checkpoint layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

/// Tape handles for every parameter of a [`ParamStore`], valid for one
/// forward pass.
#[derive(Clone, Debug)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor.with_requires_grad(true));
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut()
    }

    /// Records every parameter on `tape` as a gradient-tracking leaf.
    pub fn bind(&self, tape: &mut Tape) -> Binding {
        Binding {
            vars: self.tensors.iter().map(|t| tape.leaf(t)).collect(),
        }
    }

    /// Adds the tape's accumulated leaf gradients into each parameter's
    /// gradient buffer.
    pub fn accumulate_grads(&mut self, tape: &Tape, binding: &Binding) -> Result<()> {
        for (t, v) in self.tensors.iter_mut().zip(&binding.vars) {
            match tape.grad(*v) {
                Some(g) => t.accumulate_grad(g)?,
                None => t.accumulate_grad(&vec![0.0; t.numel()])?,
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Replaces all values from another store with identical names and
    /// shapes.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.names != other.names {
            return Err(invalid("parameter name lists differ"));
        }
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            if dst.shape() != src.shape() {
                return Err(invalid("parameter shapes differ"));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}

/// Deterministic parameter initializer.
pub struct Initializer {
    rng: ChaCha8Rng,
    std: f64,
}

impl Initializer {
    pub fn new(seed: u64, std: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            std,
        }
    }

    /// Normal(0, std²) truncated to ±2 std by resampling.
    pub fn trunc_normal(&mut self, shape: &[usize]) -> Tensor {
        let mut t = Tensor::zeros(shape);
        if self.std == 0.0 {
            return t;
        }
        let normal = Normal::new(0.0, self.std).expect("finite std");
        for v in t.data_mut() {
            *v = loop {
                let x: f64 = normal.sample(&mut self.rng);
                if x.abs() <= 2.0 * self.std {
                    break x;
                }
            };
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_truncated() {
        let a = Initializer::new(7, 0.02).trunc_normal(&[1000]);
        let b = Initializer::new(7, 0.02).trunc_normal(&[1000]);
        let c = Initializer::new(8, 0.02).trunc_normal(&[1000]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.data().iter().all(|v| v.abs() <= 0.04));
        let mean = a.data().iter().sum::<f64>() / 1000.0;
        assert!(mean.abs() < 0.003);
    }

    #[test]
    fn bind_and_accumulate() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::full(&[2], 3.0));
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let sq = tape.mul(b.var(w), b.var(w)).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        store.accumulate_grads(&tape, &b).unwrap();
        assert_eq!(store.get(w).grad().unwrap(), &[6.0, 6.0]);
        assert_eq!(store.find("w"), Some(w));
        assert_eq!(store.num_scalars(), 2);
    }
}
