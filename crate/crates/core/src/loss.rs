//! Differentiable objectives.

use std::f64::consts::PI;

use crate::error::Result;
use crate::{Graph, Tensor, Var};

/// Mean negative Gaussian log-likelihood of `y` under elementwise
/// `N(mean, std²)`. All three share one shape.
pub fn gaussian_nll(g: &Graph, y: &Tensor, mean: Var, std: Var) -> Result<Var> {
    let y = g.constant(y.clone());
    let resid = g.sub(y, mean)?;
    let z = g.div(resid, std)?;
    let z2 = g.mul(z, z)?;
    let half_z2 = g.scale(z2, 0.5)?;
    let log_std = g.log(std)?;
    let per_point = g.add(half_z2, log_std)?;
    let mean_term = g.mean_all(per_point)?;
    let c = g.constant(Tensor::scalar(0.5 * (2.0 * PI).ln()));
    g.add(mean_term, c)
}
