//! Strided encoder/decoder with skip concatenation, in one or two spatial
//! dimensions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{uniform_weight, Bound, ParamStore};
use crate::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dims {
    One,
    Two,
}

/// Layer widths: encoder level `i` has `base · 2^i` channels, decoder level
/// `j` mirrors encoder level `levels − 2 − j`, and the last decoder emits
/// `out_channels`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetSpec {
    pub dims: Dims,
    pub in_channels: usize,
    pub base: usize,
    pub levels: usize,
    pub kernel: usize,
    pub out_channels: usize,
}

impl UNetSpec {
    /// Spatial lengths must be divisible by this.
    pub fn multiple(&self) -> usize {
        1 << self.levels
    }

    fn enc_channels(&self, level: usize) -> usize {
        self.base << level
    }

    /// `(c_in, c_out)` for encoder level `i`.
    fn down(&self, i: usize) -> (usize, usize) {
        let c_in = if i == 0 { self.in_channels } else { self.enc_channels(i - 1) };
        (c_in, self.enc_channels(i))
    }

    /// `(c_in, c_out)` for decoder level `j`.
    fn up(&self, j: usize) -> (usize, usize) {
        let top = self.levels - 1;
        let c_in = if j == 0 {
            self.enc_channels(top)
        } else {
            2 * self.enc_channels(top - j)
        };
        let c_out = if j == top { self.out_channels } else { self.enc_channels(top - 1 - j) };
        (c_in, c_out)
    }

    fn kernel_shape(&self, a: usize, b: usize) -> Vec<usize> {
        match self.dims {
            Dims::One => vec![a, b, self.kernel],
            Dims::Two => vec![a, b, self.kernel, self.kernel],
        }
    }

    fn taps(&self) -> usize {
        match self.dims {
            Dims::One => self.kernel,
            Dims::Two => self.kernel * self.kernel,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng, prefix: &str) {
        for i in 0..self.levels {
            let (ci, co) = self.down(i);
            let w = uniform_weight(rng, &self.kernel_shape(co, ci), ci * self.taps());
            store.insert(format!("{prefix}.down{i}.w"), w);
            store.insert(format!("{prefix}.down{i}.b"), Tensor::zeros([co]));
        }
        for j in 0..self.levels {
            let (ci, co) = self.up(j);
            let w = uniform_weight(rng, &self.kernel_shape(ci, co), ci * self.taps());
            store.insert(format!("{prefix}.up{j}.w"), w);
            store.insert(format!("{prefix}.up{j}.b"), Tensor::zeros([co]));
        }
    }

    fn bias(&self, g: &Graph, p: &Bound, name: &str, x: Var) -> Result<Var> {
        let b = p.var(name)?;
        let c = g.shape(b)[0];
        let b = match self.dims {
            Dims::One => g.reshape(b, [c, 1])?,
            Dims::Two => g.reshape(b, [c, 1, 1])?,
        };
        g.add(x, b)
    }

    /// `x` is `[c_in, L]` or `[c_in, H, W]` with every spatial length a
    /// multiple of [`UNetSpec::multiple`]. Output has the same spatial shape.
    pub fn apply(&self, g: &Graph, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
        let shape = g.shape(x);
        let spatial_rank = match self.dims {
            Dims::One => 1,
            Dims::Two => 2,
        };
        if shape.len() != spatial_rank + 1 || shape[0] != self.in_channels {
            return Err(Error::contract(format!(
                "unet expects {} input channels over {spatial_rank} spatial dims, got {shape:?}",
                self.in_channels
            )));
        }
        if shape[1..].iter().any(|&n| n % self.multiple() != 0) {
            return Err(Error::contract(format!(
                "unet spatial shape {:?} not divisible by {}",
                &shape[1..],
                self.multiple()
            )));
        }
        let pad = self.kernel / 2;
        let mut skips = Vec::with_capacity(self.levels);
        let mut h = x;
        for i in 0..self.levels {
            let w = p.var(&format!("{prefix}.down{i}.w"))?;
            h = match self.dims {
                Dims::One => g.conv1d(h, w, 2, pad)?,
                Dims::Two => g.conv2d(h, w, 2, pad)?,
            };
            h = self.bias(g, p, &format!("{prefix}.down{i}.b"), h)?;
            h = g.relu(h)?;
            skips.push(h);
        }
        let top = self.levels - 1;
        for j in 0..self.levels {
            if j > 0 {
                h = g.concat(&[h, skips[top - j]], 0)?;
            }
            let w = p.var(&format!("{prefix}.up{j}.w"))?;
            h = match self.dims {
                Dims::One => g.conv_transpose1d(h, w, 2, pad, 1)?,
                Dims::Two => g.conv_transpose2d(h, w, 2, pad, 1)?,
            };
            h = self.bias(g, p, &format!("{prefix}.up{j}.b"), h)?;
            if j != top {
                h = g.relu(h)?;
            }
        }
        Ok(h)
    }
}
