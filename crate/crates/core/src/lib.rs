// Range checks are written as `!(a < b)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod diff;
pub mod error;
pub mod eval;
pub mod gp;
pub mod loss;
pub mod offgrid;
pub mod ongrid;
pub mod optim;
pub mod params;
pub mod rng;
pub mod taskgen;
pub mod train;
pub mod unet;

pub use diff::{grad_check, Gradients, Graph, Tensor, Var};
pub use error::{Error, Result};
pub use params::ParamStore;
