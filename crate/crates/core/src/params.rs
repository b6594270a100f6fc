//! Named learnable tensors.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::error::{Error, Result};
use crate::{Graph, Tensor, Var};

/// Ordered map from parameter name to tensor. Iteration order (and so
/// checkpoint layout) is the lexicographic order of names.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Register every tensor as a named leaf of `g`.
    pub fn bind(&self, g: &Graph) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|(name, t)| (name.clone(), g.param(name.clone(), t)))
                .collect(),
        }
    }
}

impl FromIterator<(String, Tensor)> for ParamStore {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        ParamStore {
            tensors: iter.into_iter().collect(),
        }
    }
}

/// Graph handles for the parameters of one store.
pub struct Bound {
    vars: HashMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::contract(format!("missing parameter {name:?}")))
    }
}

/// Uniform in `±sqrt(1/fan_in)`.
pub(crate) fn uniform_weight(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// Adds `{prefix}.w` `[c_out, c_in]` and zero `{prefix}.b` `[c_out]`.
pub(crate) fn init_affine(store: &mut ParamStore, rng: &mut impl Rng, prefix: &str, c_in: usize, c_out: usize) {
    store.insert(format!("{prefix}.w"), uniform_weight(rng, &[c_out, c_in], c_in));
    store.insert(format!("{prefix}.b"), Tensor::zeros([c_out]));
}

/// Apply the affine map `{prefix}` pointwise to `x` `[c_in, ...]`.
pub(crate) fn affine(g: &Graph, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let w = p.var(&format!("{prefix}.w"))?;
    let b = p.var(&format!("{prefix}.b"))?;
    g.affine_pointwise(x, w, b)
}
