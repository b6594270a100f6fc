//! Fixed-hyperparameter GP kernels, exact sampling and the exact posterior.
//!
//! These are the ground truth the neural models are measured against: a
//! zero-mean, noise-free GP with a small diagonal jitter for stability.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;
use crate::Tensor;

/// Diagonal jitter added to every Gram matrix.
pub const JITTER: f64 = 1e-8;
/// Largest jitter tried before a Gram matrix is declared degenerate.
pub const MAX_JITTER: f64 = 1e-6;

const EQ_LENGTH_SCALE: f64 = 0.25;
const MATERN_DISTANCE_SCALE: f64 = 4.0;
const PERIODIC_FREQUENCY: f64 = 8.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelSpec {
    Eq,
    Matern52,
    WeaklyPeriodic,
}

impl KernelSpec {
    pub const ALL: [KernelSpec; 3] = [KernelSpec::Eq, KernelSpec::Matern52, KernelSpec::WeaklyPeriodic];

    pub fn name(self) -> &'static str {
        match self {
            KernelSpec::Eq => "eq",
            KernelSpec::Matern52 => "matern",
            KernelSpec::WeaklyPeriodic => "weakly-periodic",
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eq" => Ok(KernelSpec::Eq),
            "matern" | "matern52" => Ok(KernelSpec::Matern52),
            "weakly-periodic" => Ok(KernelSpec::WeaklyPeriodic),
            other => Err(Error::contract(format!("unknown kernel {other:?}"))),
        }
    }
}

pub fn kernel_eval(spec: KernelSpec, x: f64, x2: f64) -> f64 {
    let r = x - x2;
    match spec {
        KernelSpec::Eq => (-0.5 * (r / EQ_LENGTH_SCALE).powi(2)).exp(),
        KernelSpec::Matern52 => {
            let d = MATERN_DISTANCE_SCALE * r.abs();
            let s5d = 5f64.sqrt() * d;
            (1.0 + s5d + 5.0 / 3.0 * d * d) * (-s5d).exp()
        }
        KernelSpec::WeaklyPeriodic => {
            let (s1, c1) = (PERIODIC_FREQUENCY * x).sin_cos();
            let (s2, c2) = (PERIODIC_FREQUENCY * x2).sin_cos();
            let periodic = -0.5 * (c1 - c2).powi(2) - 0.5 * (s1 - s2).powi(2);
            (periodic - r * r / 8.0).exp()
        }
    }
}

/// `[N, N']` matrix of kernel values.
pub fn gram(spec: KernelSpec, xs: &[f64], xs2: &[f64]) -> Result<Tensor> {
    if xs.is_empty() || xs2.is_empty() {
        return Err(Error::contract("gram needs nonempty inputs"));
    }
    let data = xs
        .iter()
        .flat_map(|&a| xs2.iter().map(move |&b| kernel_eval(spec, a, b)))
        .collect();
    Tensor::new([xs.len(), xs2.len()], data)
}

fn gram_matrix(spec: KernelSpec, xs: &[f64], xs2: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), xs2.len(), |i, j| kernel_eval(spec, xs[i], xs2[j]))
}

/// Cholesky factor of `k + jitter·I`, escalating the jitter up to
/// [`MAX_JITTER`] before giving up.
fn jittered_cholesky(k: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let mut jitter = JITTER;
    while jitter <= MAX_JITTER * 1.000_001 {
        let mut m = k.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::Degenerate(format!(
        "{0}x{0} Gram matrix not positive definite with jitter {MAX_JITTER:e}",
        k.nrows()
    )))
}

/// One zero-mean draw of the GP at `xs`, determined by `seed`.
pub fn gp_sample(spec: KernelSpec, xs: &[f64], seed: u64) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::contract("gp_sample needs at least one position"));
    }
    let chol = jittered_cholesky(&gram_matrix(spec, xs, xs))?;
    let mut rng = rng::stream(seed, 0, rng::streams::GP_DRAW);
    let z = DVector::from_iterator(
        xs.len(),
        (0..xs.len()).map(|_| StandardNormal.sample(&mut rng)),
    );
    Ok((chol.l() * z).iter().copied().collect())
}

/// Per-point Gaussian predictive distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrediction {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Exact noise-free GP posterior at `xt` given context `(xc, yc)`.
///
/// With no context this is the prior.
pub fn gp_posterior(spec: KernelSpec, xc: &[f64], yc: &[f64], xt: &[f64]) -> Result<GaussianPrediction> {
    if xc.len() != yc.len() {
        return Err(Error::contract(format!(
            "gp_posterior: {} context positions but {} values",
            xc.len(),
            yc.len()
        )));
    }
    if xt.is_empty() {
        return Err(Error::contract("gp_posterior needs at least one target"));
    }
    let prior_var: Vec<f64> = xt.iter().map(|&x| kernel_eval(spec, x, x)).collect();
    if xc.is_empty() {
        return Ok(GaussianPrediction {
            mean: vec![0.0; xt.len()],
            std: prior_var.iter().map(|v| (v + JITTER).sqrt()).collect(),
        });
    }
    let chol = jittered_cholesky(&gram_matrix(spec, xc, xc))?;
    let k_star = gram_matrix(spec, xc, xt);
    let alpha = chol.solve(&DVector::from_column_slice(yc));
    let mean = k_star.transpose() * alpha;
    let mut v = k_star;
    chol.l_dirty()
        .solve_lower_triangular_mut(&mut v)
        .then_some(())
        .ok_or_else(|| Error::Degenerate("triangular solve failed".into()))?;
    let std = prior_var
        .iter()
        .enumerate()
        .map(|(m, kss)| {
            let reduction: f64 = v.column(m).iter().map(|e| e * e).sum();
            ((kss - reduction).max(0.0) + JITTER).sqrt()
        })
        .collect();
    Ok(GaussianPrediction {
        mean: mean.iter().copied().collect(),
        std,
    })
}

/// Average per-point Gaussian log density of `y` under `pred`.
pub fn gaussian_loglik(y: &[f64], pred: &GaussianPrediction) -> Result<f64> {
    if y.len() != pred.mean.len() || y.len() != pred.std.len() || y.is_empty() {
        return Err(Error::contract(format!(
            "gaussian_loglik: {} values vs mean {} / std {}",
            y.len(),
            pred.mean.len(),
            pred.std.len()
        )));
    }
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    let mut total = 0.0;
    for ((&y, &mu), &sigma) in y.iter().zip(&pred.mean).zip(&pred.std) {
        if !(sigma > 0.0) {
            return Err(Error::contract(format!("gaussian_loglik: std {sigma} is not positive")));
        }
        let z = (y - mu) / sigma;
        total += -half_log_2pi - sigma.ln() - 0.5 * z * z;
    }
    Ok(total / y.len() as f64)
}
